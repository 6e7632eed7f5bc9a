//! Interaction matrices for the local exchange and independent-group
//! resampling schemes.
//!
//! Both schemes are encoded by a sparse doubly stochastic N x N matrix
//! `alpha` (N = M * m): row i lists the particles allowed to serve as
//! resampling donors for the new particle i, each with weight 1/M. The
//! matrices share four structural properties that the variance analysis
//! relies on: double stochasticity, M-periodicity along diagonals, a band
//! structure in the cyclic metric, and agreement with a shift-invariant
//! doubly infinite limit matrix. [`verify_assumptions`] checks all four
//! exhaustively at test sizes.
//!
//! Index conventions: the defining formulas are 1-based, and the exported
//! `cmod` and [`delta_metric`] follow them exactly. Stored rows/columns of
//! [`AlphaMatrix`] are 0-based, as used by the particle engine.

use crate::{Error, Result};

/// `y cmod x = y - floor((y-1)/x) * x`, the 1-based cyclic remainder: the
/// unique value in `[1, x]` congruent to `y` modulo `x`. An off-by-one here
/// corrupts every donor window downstream, so this is pinned by unit tests
/// against the definition.
pub fn cmod(y: i64, x: i64) -> i64 {
    debug_assert!(x >= 1);
    y - (y - 1).div_euclid(x) * x
}

/// Cyclic distance on `[1, N]` (also valid for 0-based labels since it only
/// involves differences): `min over integers l of |i - j + l*N|`.
pub fn delta_metric(i: i64, j: i64, n: i64) -> i64 {
    debug_assert!(n >= 1);
    let r = (i - j).rem_euclid(n);
    r.min(n - r)
}

/// Which of the two schemes a matrix realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    /// Local exchange: each group's donor pool is the group shifted by theta.
    Lepf,
    /// Independent groups: each group resamples only from itself.
    Ibpf,
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SchemeKind::Lepf => write!(f, "lepf"),
            SchemeKind::Ibpf => write!(f, "ibpf"),
        }
    }
}

/// A resampling interaction scheme: group size M, and for the local exchange
/// variant the shift parameter theta in {1, ..., M-1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteractionScheme {
    pub kind: SchemeKind,
    /// Group size M.
    pub group_size: usize,
    /// Exchange shift theta; zero for the independent scheme.
    pub theta: usize,
}

impl InteractionScheme {
    /// Local exchange scheme with M >= 2 and theta in {1, ..., M-1}.
    pub fn lepf(group_size: usize, theta: usize) -> Result<Self> {
        if group_size < 2 {
            return Err(Error::InvalidScheme(format!(
                "local exchange needs group size M >= 2, got {group_size} (the shift set is empty)"
            )));
        }
        if theta == 0 || theta >= group_size {
            return Err(Error::InvalidScheme(format!(
                "shift theta must lie in 1..={}, got {theta}",
                group_size - 1
            )));
        }
        Ok(Self { kind: SchemeKind::Lepf, group_size, theta })
    }

    /// Independent bootstrap groups with M >= 1.
    pub fn ibpf(group_size: usize) -> Result<Self> {
        if group_size == 0 {
            return Err(Error::InvalidScheme("group size M must be >= 1".into()));
        }
        Ok(Self { kind: SchemeKind::Ibpf, group_size, theta: 0 })
    }

    /// Band width beta: M - 1 + theta for local exchange, M - 1 for
    /// independent groups.
    pub fn band_width(&self) -> usize {
        self.group_size - 1 + self.theta
    }

    /// The donor window of row `i` of the doubly infinite matrix: the M
    /// consecutive integers starting at `floor((i-1)/M)*M + theta + 1`, each
    /// carrying weight 1/M.
    pub fn alpha_infinity_row(&self, i: i64) -> InfiniteWindow {
        let m = self.group_size as i64;
        let block = (i - 1).div_euclid(m);
        InfiniteWindow { start: block * m + self.theta as i64 + 1, len: self.group_size }
    }

    /// Entry (i, j) of the doubly infinite matrix, for any integers i, j.
    pub fn alpha_infinity_entry(&self, i: i64, j: i64) -> f64 {
        let w = self.alpha_infinity_row(i);
        if w.contains(j) {
            1.0 / self.group_size as f64
        } else {
            0.0
        }
    }
}

/// Contiguous support of one row of the doubly infinite matrix: `len`
/// integers starting at `start` (inclusive), each with weight `1/len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InfiniteWindow {
    pub start: i64,
    pub len: usize,
}

impl InfiniteWindow {
    pub fn contains(&self, j: i64) -> bool {
        j >= self.start && j < self.start + self.len as i64
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> {
        self.start..self.start + self.len as i64
    }
}

/// Sparse N x N interaction matrix for one of the two schemes.
///
/// Rows are stored 0-based; every row holds exactly M `(column, 1/M)` pairs
/// and, because the donor windows tile `[N]`, so does every column.
#[derive(Debug, Clone)]
pub struct AlphaMatrix {
    pub scheme: InteractionScheme,
    /// Number of groups m.
    pub group_count: usize,
    /// Matrix dimension N = M * m.
    pub n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

/// Build the interaction matrix for `scheme` with `m` groups.
///
/// Entries follow the defining indicator formulas: row i (1-based) of the
/// local exchange matrix has weight 1/M at exactly the columns j with
/// `floor((i-1)/M) == floor(((j - theta) cmod N - 1)/M)`; the independent
/// scheme is the same with theta = 0, i.e. block diagonal.
pub fn build_alpha(scheme: InteractionScheme, group_count: usize) -> Result<AlphaMatrix> {
    if group_count == 0 {
        return Err(Error::InvalidScheme("group count m must be >= 1".into()));
    }
    let m_size = scheme.group_size;
    let n = m_size * group_count;
    let weight = 1.0 / m_size as f64;
    let mut rows = Vec::with_capacity(n);
    for i in 1..=n as i64 {
        let block = (i - 1) / m_size as i64;
        let mut cols: Vec<(usize, f64)> = (1..=m_size as i64)
            .map(|r| {
                // j solves (j - theta) cmod N = block*M + r.
                let j = cmod(block * m_size as i64 + r + scheme.theta as i64, n as i64);
                ((j - 1) as usize, weight)
            })
            .collect();
        cols.sort_unstable_by_key(|&(c, _)| c);
        rows.push(cols);
    }
    Ok(AlphaMatrix { scheme, group_count, n, rows })
}

impl AlphaMatrix {
    /// Sparse row `i` (0-based): the `(column, weight)` pairs, sorted by column.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Entry lookup by 0-based indices.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|&&(c, _)| c == j)
            .map(|&(_, w)| w)
            .unwrap_or(0.0)
    }

    /// Donor columns (0-based) shared by every row of group `k`.
    pub fn group_window(&self, k: usize) -> Vec<usize> {
        self.rows[k * self.scheme.group_size].iter().map(|&(c, _)| c).collect()
    }

    /// Dense materialization, for test-time column checks at small N only.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                dense[i][j] = w;
            }
        }
        dense
    }

    /// Rebuild a matrix from a dense array (e.g. loaded from a file) so that
    /// externally supplied matrices can be run through [`verify_assumptions`].
    pub fn from_dense(scheme: InteractionScheme, dense: &[Vec<f64>]) -> Result<Self> {
        let n = dense.len();
        if n == 0 || n % scheme.group_size != 0 {
            return Err(Error::InvalidScheme(format!(
                "matrix size {n} is not a multiple of group size {}",
                scheme.group_size
            )));
        }
        let mut rows = Vec::with_capacity(n);
        for (i, drow) in dense.iter().enumerate() {
            if drow.len() != n {
                return Err(Error::InvalidScheme(format!(
                    "row {i} has {} entries, expected {n}",
                    drow.len()
                )));
            }
            let cols: Vec<(usize, f64)> = drow
                .iter()
                .enumerate()
                .filter(|&(_, &w)| w != 0.0)
                .map(|(j, &w)| (j, w))
                .collect();
            rows.push(cols);
        }
        Ok(AlphaMatrix { scheme, group_count: n / scheme.group_size, n, rows })
    }
}

/// Outcome of checking one structural assumption.
#[derive(Debug, Clone, PartialEq)]
pub enum CheckStatus {
    Pass,
    /// Holds vacuously because N < 2*beta + 1, where the assumption imposes
    /// no constraint.
    VacuousPass,
    Fail { witness: String },
}

impl CheckStatus {
    pub fn passed(&self) -> bool {
        !matches!(self, CheckStatus::Fail { .. })
    }
}

/// Report of the four structural checks on an interaction matrix.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    /// Row and column sums all equal one.
    pub doubly_stochastic: CheckStatus,
    /// Entries are invariant under simultaneous index shifts by multiples of
    /// M (cyclically), checked exhaustively for every (i, j, z).
    pub periodic: CheckStatus,
    /// Entries vanish outside the band of width beta in the cyclic metric.
    pub band: CheckStatus,
    /// The matrix agrees with the doubly infinite limit matrix on the band,
    /// checked for indices spanning [-2N, 2N].
    pub similarity: CheckStatus,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.items().iter().all(|(_, s)| s.passed())
    }

    pub fn items(&self) -> [(&'static str, &CheckStatus); 4] {
        [
            ("2.1 doubly stochastic", &self.doubly_stochastic),
            ("2.2 M-shift periodicity", &self.periodic),
            ("2.3 band width", &self.band),
            ("2.4 infinite-matrix similarity", &self.similarity),
        ]
    }
}

/// Check the four structural assumptions on `alpha`.
///
/// Row sums are required to be 1 within 1e-14 and column sums within 1e-12;
/// periodicity and similarity are exact comparisons since all entries are
/// either 0 or 1/M. Failures carry a witnessing index tuple.
pub fn verify_assumptions(alpha: &AlphaMatrix) -> AssumptionReport {
    let n = alpha.n;
    let m_size = alpha.scheme.group_size;
    let beta = alpha.scheme.band_width();

    let doubly_stochastic = check_doubly_stochastic(alpha);

    // 2.2: alpha[i][j] == alpha[(i+zM) cmod N][(j+zM) cmod N], exhaustive.
    let mut periodic = CheckStatus::Pass;
    'outer: for i in 1..=n as i64 {
        for z in 1..=alpha.group_count as i64 {
            let i_shift = cmod(i + z * m_size as i64, n as i64);
            for &(j0, w) in alpha.row((i - 1) as usize) {
                let j = j0 as i64 + 1;
                let j_shift = cmod(j + z * m_size as i64, n as i64);
                let w_shift = alpha.entry((i_shift - 1) as usize, (j_shift - 1) as usize);
                if w != w_shift {
                    periodic = CheckStatus::Fail {
                        witness: format!("(i={i}, j={j}, z={z}): {w} vs {w_shift}"),
                    };
                    break 'outer;
                }
            }
            // Nonzero entries of the shifted row must also map back.
            let shifted_nnz = alpha.row((i_shift - 1) as usize).len();
            if shifted_nnz != alpha.row((i - 1) as usize).len() {
                periodic = CheckStatus::Fail {
                    witness: format!("(i={i}, z={z}): row support sizes differ"),
                };
                break 'outer;
            }
        }
    }

    let band = if n >= 2 * beta + 1 {
        let mut status = CheckStatus::Pass;
        'band: for i in 1..=n as i64 {
            for &(j0, _) in alpha.row((i - 1) as usize) {
                let j = j0 as i64 + 1;
                let d = delta_metric(i, j, n as i64);
                if d > beta as i64 {
                    status = CheckStatus::Fail {
                        witness: format!("(i={i}, j={j}): Delta = {d} > beta = {beta}"),
                    };
                    break 'band;
                }
            }
        }
        status
    } else {
        CheckStatus::VacuousPass
    };

    let similarity = if n >= 2 * beta + 1 {
        let mut status = CheckStatus::Pass;
        'sim: for i in -(2 * n as i64)..=(2 * n as i64) {
            for j in -(2 * n as i64)..=(2 * n as i64) {
                let infinite = alpha.scheme.alpha_infinity_entry(i, j);
                let folded = if (i - j).abs() <= beta as i64 {
                    alpha.entry(
                        (cmod(i, n as i64) - 1) as usize,
                        (cmod(j, n as i64) - 1) as usize,
                    )
                } else {
                    0.0
                };
                if infinite != folded {
                    status = CheckStatus::Fail {
                        witness: format!("(i={i}, j={j}): inf {infinite} vs folded {folded}"),
                    };
                    break 'sim;
                }
            }
        }
        status
    } else {
        CheckStatus::VacuousPass
    };

    AssumptionReport { doubly_stochastic, periodic, band, similarity }
}

fn check_doubly_stochastic(alpha: &AlphaMatrix) -> CheckStatus {
    let n = alpha.n;
    for i in 0..n {
        let sum: f64 = alpha.row(i).iter().map(|&(_, w)| w).sum();
        if (sum - 1.0).abs() > 1e-14 {
            return CheckStatus::Fail { witness: format!("row {} sums to {sum}", i + 1) };
        }
    }
    let mut col_sums = vec![0.0; n];
    for i in 0..n {
        for &(j, w) in alpha.row(i) {
            col_sums[j] += w;
        }
    }
    for (j, sum) in col_sums.iter().enumerate() {
        if (sum - 1.0).abs() > 1e-12 {
            return CheckStatus::Fail { witness: format!("column {} sums to {sum}", j + 1) };
        }
    }
    CheckStatus::Pass
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cmod_matches_definition() {
        // Pinned against y - floor((y-1)/x) x over a window of both signs.
        for x in 1..=7i64 {
            for y in -30..=30i64 {
                let expected = y - ((y - 1) as f64 / x as f64).floor() as i64 * x;
                assert_eq!(cmod(y, x), expected, "y={y}, x={x}");
                assert!((1..=x).contains(&cmod(y, x)));
                assert_eq!((cmod(y, x) - y).rem_euclid(x), 0);
            }
        }
        assert_eq!(cmod(9, 9), 9);
        assert_eq!(cmod(10, 9), 1);
        assert_eq!(cmod(0, 9), 9);
    }

    #[test]
    fn delta_metric_examples() {
        for n in 1..=12 {
            for i in 1..=n {
                assert_eq!(delta_metric(i, i, n), 0);
            }
        }
        assert_eq!(delta_metric(1, 8, 8), 1); // wraparound
        assert_eq!(delta_metric(2, 5, 8), 3); // min over l in {-1, 0, 1}
    }

    proptest! {
        #[test]
        fn delta_metric_is_a_metric(n in 2i64..40, a in 1i64..40, b in 1i64..40, c in 1i64..40) {
            let (i, j, k) = (cmod(a, n), cmod(b, n), cmod(c, n));
            let dij = delta_metric(i, j, n);
            prop_assert!(dij >= 0 && dij <= n / 2);
            prop_assert_eq!(dij, delta_metric(j, i, n));
            prop_assert!(delta_metric(i, k, n) <= dij + delta_metric(j, k, n));
            prop_assert_eq!(dij == 0, i == j);
        }

        #[test]
        fn alpha_rows_and_columns_have_m_entries(
            m_size in 1usize..6,
            groups in 1usize..9,
            theta in 0usize..5,
        ) {
            let scheme = if m_size >= 2 && theta >= 1 && theta < m_size {
                InteractionScheme::lepf(m_size, theta).unwrap()
            } else {
                InteractionScheme::ibpf(m_size).unwrap()
            };
            let alpha = build_alpha(scheme, groups).unwrap();
            let mut col_counts = vec![0usize; alpha.n];
            for i in 0..alpha.n {
                prop_assert_eq!(alpha.row(i).len(), m_size);
                for &(j, w) in alpha.row(i) {
                    prop_assert_eq!(w, 1.0 / m_size as f64);
                    col_counts[j] += 1;
                }
            }
            prop_assert!(col_counts.iter().all(|&c| c == m_size));
        }
    }

    #[test]
    fn lepf_matrix_matches_nine_by_nine_reference() {
        // M = 3, theta = 1, m = 3: block-shifted matrix with rows of group k
        // supported on columns {2,3,4}, {5,6,7}, {8,9,1} (1-based).
        let alpha = build_alpha(InteractionScheme::lepf(3, 1).unwrap(), 3).unwrap();
        let w = 1.0 / 3.0;
        let expected_windows = [vec![1, 2, 3], vec![4, 5, 6], vec![0, 7, 8]];
        for i in 0..9 {
            let want: Vec<(usize, f64)> =
                expected_windows[i / 3].iter().map(|&c| (c, w)).collect();
            assert_eq!(alpha.row(i), want.as_slice(), "row {i}");
        }
    }

    #[test]
    fn ibpf_matrix_is_block_diagonal() {
        let alpha = build_alpha(InteractionScheme::ibpf(3).unwrap(), 3).unwrap();
        let w = 1.0 / 3.0;
        for i in 0..9 {
            let base = (i / 3) * 3;
            let want: Vec<(usize, f64)> = (base..base + 3).map(|c| (c, w)).collect();
            assert_eq!(alpha.row(i), want.as_slice(), "row {i}");
        }
    }

    #[test]
    fn ibpf_singleton_groups_give_identity() {
        let alpha = build_alpha(InteractionScheme::ibpf(1).unwrap(), 2).unwrap();
        assert_eq!(alpha.row(0), &[(0, 1.0)]);
        assert_eq!(alpha.row(1), &[(1, 1.0)]);
    }

    #[test]
    fn lepf_rejects_singleton_groups() {
        assert!(InteractionScheme::lepf(1, 1).is_err());
        assert!(InteractionScheme::lepf(3, 0).is_err());
        assert!(InteractionScheme::lepf(3, 3).is_err());
    }

    #[test]
    fn assumptions_pass_for_both_schemes_at_all_test_sizes() {
        for m_size in 1..=5usize {
            for groups in 1..=8usize {
                let schemes: Vec<InteractionScheme> = std::iter::once(
                    InteractionScheme::ibpf(m_size).unwrap(),
                )
                .chain((1..m_size).map(|theta| InteractionScheme::lepf(m_size, theta).unwrap()))
                .collect();
                for scheme in schemes {
                    let alpha = build_alpha(scheme, groups).unwrap();
                    let report = verify_assumptions(&alpha);
                    assert!(
                        report.all_passed(),
                        "M={m_size}, m={groups}, scheme={:?}: {:?}",
                        scheme,
                        report
                    );
                }
            }
        }
    }

    #[test]
    fn perturbed_matrix_fails_column_sums_with_witness() {
        let alpha = build_alpha(InteractionScheme::lepf(3, 1).unwrap(), 3).unwrap();
        let mut dense = alpha.to_dense();
        // Move one weight: breaks a column sum (and the row it lands in).
        dense[0][1] = 0.0;
        dense[0][5] += 1.0 / 3.0;
        let corrupted = AlphaMatrix::from_dense(alpha.scheme, &dense).unwrap();
        let report = verify_assumptions(&corrupted);
        assert!(!report.all_passed());
        match &report.doubly_stochastic {
            CheckStatus::Fail { witness } => assert!(witness.contains("column")),
            other => panic!("expected column-sum failure, got {other:?}"),
        }
    }

    #[test]
    fn infinite_rows_are_shift_covariant_windows() {
        let lepf = InteractionScheme::lepf(3, 1).unwrap();
        let w = lepf.alpha_infinity_row(1);
        assert_eq!((w.start, w.len), (2, 3)); // window {2,3,4}

        let ibpf = InteractionScheme::ibpf(3).unwrap();
        let w = ibpf.alpha_infinity_row(1);
        assert_eq!((w.start, w.len), (1, 3)); // window {1,2,3}

        for scheme in [lepf, ibpf] {
            for i in -10..=10i64 {
                let a = scheme.alpha_infinity_row(i);
                let b = scheme.alpha_infinity_row(i + scheme.group_size as i64);
                assert_eq!(b.start - a.start, scheme.group_size as i64);
                assert_eq!(a.len, b.len);
            }
        }
    }

    #[test]
    fn infinite_rows_restricted_to_interior_match_finite_rows() {
        // For rows away from the wraparound region the finite matrix row is
        // exactly the infinite window.
        for (scheme, groups) in [
            (InteractionScheme::lepf(3, 2).unwrap(), 5),
            (InteractionScheme::lepf(2, 1).unwrap(), 6),
            (InteractionScheme::ibpf(4).unwrap(), 4),
        ] {
            let alpha = build_alpha(scheme, groups).unwrap();
            let beta = scheme.band_width() as i64;
            let n = alpha.n as i64;
            assert!(n >= 2 * beta + 1);
            for i in (beta + 1)..=(n - beta) {
                let window: Vec<i64> = scheme.alpha_infinity_row(i).iter().collect();
                let finite: Vec<i64> =
                    alpha.row((i - 1) as usize).iter().map(|&(c, _)| c as i64 + 1).collect();
                assert_eq!(window, finite, "scheme {scheme:?} row {i}");
            }
        }
    }
}
