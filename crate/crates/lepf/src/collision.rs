//! Laws of the collision count of two backward index chains.
//!
//! Run two independent copies of the index chain with transition matrix
//! `alpha_infinity` backward for `n` steps from a common (or distinct) start
//! and count the steps at which they occupy the same index. That count,
//! `Z_n`, drives the asymptotic variance of both resampling schemes: for the
//! simplified model the variance is `pi0(phibar^2) E[exp(t Z_n)]` with
//! `t = log(1 + c)`.
//!
//! For the independent scheme the chains stay in one block and `Z_n` is
//! plain Binomial(n, 1/M). For the local exchange scheme the block offset of
//! the two chains performs a lazy random walk `D`, collisions can only occur
//! on 0 -> 0 transitions of `D`, and the law of `Z_n` is available two ways:
//! an exact dynamic program over (step, offset, count), and a closed-form
//! mixture of binomial, return-to-zero and beta-binomial laws. The two
//! routes are independent implementations kept in agreement to 1e-10, with
//! the chain sampler as a third, statistical route.

use rand::{Rng, RngCore};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::interaction::{InteractionScheme, SchemeKind};
use crate::numeric::{ln_beta, ln_binomial_pmf, ln_choose, log_sum_exp};
use crate::{Error, Result};

const PMF_TOL: f64 = 1e-10;

/// A probability mass function on a contiguous integer support.
#[derive(Debug, Clone)]
pub struct PmfTable {
    offset: i64,
    probs: Vec<f64>,
}

impl PmfTable {
    /// Validating constructor: entries nonnegative, total mass 1 within 1e-10.
    pub fn new(offset: i64, probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidParameters("empty pmf".into()));
        }
        if probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::InvalidParameters("pmf has a negative or non-finite entry".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PMF_TOL {
            return Err(Error::InvalidParameters(format!(
                "pmf sums to {total}, not 1 within {PMF_TOL}"
            )));
        }
        Ok(Self { offset, probs })
    }

    /// Point mass at `value`.
    pub fn delta(value: i64) -> Self {
        Self { offset: value, probs: vec![1.0] }
    }

    pub fn prob(&self, value: i64) -> f64 {
        if value < self.offset {
            return 0.0;
        }
        self.probs.get((value - self.offset) as usize).copied().unwrap_or(0.0)
    }

    pub fn min_value(&self) -> i64 {
        self.offset
    }

    pub fn max_value(&self) -> i64 {
        self.offset + self.probs.len() as i64 - 1
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.probs.iter().enumerate().map(move |(i, &p)| (self.offset + i as i64, p))
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(v, p)| v as f64 * p).sum()
    }

    /// Total variation distance, `0.5 * sum |p - q|` over the union support.
    pub fn total_variation(&self, other: &PmfTable) -> f64 {
        let lo = self.min_value().min(other.min_value());
        let hi = self.max_value().max(other.max_value());
        let mut acc = 0.0;
        for v in lo..=hi {
            acc += (self.prob(v) - other.prob(v)).abs();
        }
        acc / 2.0
    }

    /// `log E[exp(t X)]` by direct summation over the support, computed via
    /// log-sum-exp. This is the reference the dedicated mgf routines are
    /// checked against.
    pub fn log_mgf(&self, t: f64) -> f64 {
        let terms: Vec<f64> = self
            .iter()
            .filter(|&(_, p)| p > 0.0)
            .map(|(v, p)| t * v as f64 + p.ln())
            .collect();
        log_sum_exp(&terms)
    }
}

/// Parameters of the collision-count law: the scheme and the horizon n.
///
/// Derived step probabilities of the block-offset walk `D` and the collision
/// probability on its 0 -> 0 transitions:
///
/// * local exchange: `q_step = theta (M - theta) / M^2` (each direction),
///   `q_stay = ((M - theta)^2 + theta^2) / M^2`,
///   `p_coll = M / ((M - theta)^2 + theta^2)`;
/// * independent groups: the offset is frozen (`q_stay = 1`) and
///   `p_coll = 1/M`.
///
/// In both cases `q_stay * p_coll = 1/M`.
#[derive(Debug, Clone, Copy)]
pub struct ZLawSpec {
    pub scheme: InteractionScheme,
    pub horizon: usize,
}

impl ZLawSpec {
    pub fn new(scheme: InteractionScheme, horizon: usize) -> Self {
        Self { scheme, horizon }
    }

    pub fn q_step(&self) -> f64 {
        match self.scheme.kind {
            SchemeKind::Ibpf => 0.0,
            SchemeKind::Lepf => {
                let m = self.scheme.group_size as f64;
                let th = self.scheme.theta as f64;
                th * (m - th) / (m * m)
            }
        }
    }

    pub fn q_stay(&self) -> f64 {
        match self.scheme.kind {
            SchemeKind::Ibpf => 1.0,
            SchemeKind::Lepf => {
                let m = self.scheme.group_size as f64;
                let th = self.scheme.theta as f64;
                ((m - th) * (m - th) + th * th) / (m * m)
            }
        }
    }

    pub fn p_coll(&self) -> f64 {
        match self.scheme.kind {
            SchemeKind::Ibpf => 1.0 / self.scheme.group_size as f64,
            SchemeKind::Lepf => {
                let m = self.scheme.group_size as f64;
                let th = self.scheme.theta as f64;
                m / ((m - th) * (m - th) + th * th)
            }
        }
    }
}

/// Collision-count law for the independent scheme: `Binomial(n, 1/M)`.
pub fn z_pmf_ibpf(n: usize, group_size: usize) -> Result<PmfTable> {
    if group_size == 0 {
        return Err(Error::InvalidParameters("group size M must be >= 1".into()));
    }
    let p = 1.0 / group_size as f64;
    let probs: Vec<f64> = (0..=n as u64).map(|k| ln_binomial_pmf(k, n as u64, p).exp()).collect();
    PmfTable::new(0, probs)
}

/// Law of the number of returns to zero of a symmetric simple random walk in
/// `n` steps: `p(x) = 2^x / 2^(2h) * C(2h - x, h)` with `h = floor(n/2)`,
/// on `{0, ..., h}`. Log-space throughout; the central binomial coefficient
/// alone overflows linear f64 arithmetic near n = 60.
pub fn rwz_pmf(n: usize) -> Result<PmfTable> {
    let h = (n / 2) as u64;
    let probs: Vec<f64> = (0..=h)
        .map(|x| {
            (x as f64 * 2.0f64.ln() - 2.0 * h as f64 * 2.0f64.ln() + ln_choose(2 * h - x, h)).exp()
        })
        .collect();
    PmfTable::new(0, probs)
}

/// Beta-binomial pmf `p(k) = C(n,k) B(k + a, n - k + b) / B(a, b)` for
/// `a > 0, b > 0`, with the conventions `(n, 1, 0) -> point mass at n` and
/// `(0, a, b) -> point mass at 0`. Other nonpositive parameters are rejected.
pub fn beta_binomial_pmf(n: usize, a: f64, b: f64) -> Result<PmfTable> {
    if !(a > 0.0) || !b.is_finite() || b < 0.0 {
        return Err(Error::InvalidParameters(format!(
            "beta-binomial needs a > 0 and b >= 0, got a={a}, b={b}"
        )));
    }
    if b == 0.0 {
        if a != 1.0 {
            return Err(Error::InvalidParameters(format!(
                "beta-binomial with b = 0 is only defined for a = 1 (point mass), got a={a}"
            )));
        }
        return Ok(PmfTable::delta(n as i64));
    }
    if n == 0 {
        return Ok(PmfTable::delta(0));
    }
    let ln_norm = ln_beta(a, b);
    let probs: Vec<f64> = (0..=n as u64)
        .map(|k| {
            (ln_choose(n as u64, k) + ln_beta(k as f64 + a, (n as u64 - k) as f64 + b) - ln_norm)
                .exp()
        })
        .collect();
    PmfTable::new(0, probs)
}

/// Collision-count law for the local exchange scheme by the closed-form
/// mixture: condition on the number `V` of zero increments of the offset
/// walk, the returns-to-zero count `S` of the de-lazied walk, the Polya-urn
/// beta-binomial count `B` of 0 -> 0 transitions, and finally thin `B`
/// binomially with the collision probability. O(n^3) terms; intended for
/// n up to a couple of hundred.
pub fn z_pmf_lepf_mixture(n: usize, group_size: usize, theta: usize) -> Result<PmfTable> {
    let spec = ZLawSpec::new(InteractionScheme::lepf(group_size, theta)?, n);
    if n == 0 {
        return Ok(PmfTable::delta(0));
    }
    let q_stay = spec.q_stay();
    let p_coll = spec.p_coll();

    // Law of B, the number of 0 -> 0 transitions of the offset walk.
    let mut b_law = vec![0.0; n + 1];
    for v in 0..=n {
        let w_v = ln_binomial_pmf(v as u64, n as u64, q_stay).exp();
        if w_v == 0.0 {
            continue;
        }
        let s_law = rwz_pmf(n - v)?;
        for (s, w_s) in s_law.iter() {
            if w_s == 0.0 {
                continue;
            }
            let s = s as usize;
            let tail = n - v - s;
            let b_cond = if tail == 0 {
                // All off-zero steps are returns; by the point-mass
                // convention the urn puts everything at v (s = 0 here).
                PmfTable::delta(v as i64)
            } else {
                beta_binomial_pmf(v, s as f64 + 1.0, tail as f64)?
            };
            for (b, w_b) in b_cond.iter() {
                b_law[b as usize] += w_v * w_s * w_b;
            }
        }
    }

    // Z | B = b is Binomial(b, p_coll).
    let mut z_law = vec![0.0; n + 1];
    for (b, &w_b) in b_law.iter().enumerate() {
        if w_b == 0.0 {
            continue;
        }
        for z in 0..=b {
            z_law[z] += w_b * ln_binomial_pmf(z as u64, b as u64, p_coll).exp();
        }
    }
    PmfTable::new(0, z_law)
}

/// Collision-count law for the local exchange scheme by exact dynamic
/// programming over (step, block offset, running count). O(n^3), no
/// probabilistic truncation: the offset range is exactly `|d| <= k` at step
/// k since the walk moves at most one block per step.
pub fn z_pmf_lepf_dp(n: usize, group_size: usize, theta: usize) -> Result<PmfTable> {
    let spec = ZLawSpec::new(InteractionScheme::lepf(group_size, theta)?, n);
    Ok(z_pmf_dp(&spec))
}

/// Shared DP over the (offset, collision) chain; also valid for the
/// independent scheme, where the offset never moves.
fn z_pmf_dp(spec: &ZLawSpec) -> PmfTable {
    let n = spec.horizon;
    if n == 0 {
        return PmfTable::delta(0);
    }
    let (q_step, q_stay, p_coll) = (spec.q_step(), spec.q_stay(), spec.p_coll());
    let width = 2 * n + 1; // offsets -n..=n, index d + n
    let mut cur = vec![vec![0.0f64; n + 1]; width];
    cur[n][0] = 1.0; // offset 0, zero collisions, start u = v
    let mut next = vec![vec![0.0f64; n + 1]; width];
    for k in 1..=n {
        for row in next.iter_mut() {
            row.iter_mut().for_each(|x| *x = 0.0);
        }
        // After k-1 steps the walk cannot have left [-(k-1), k-1].
        for d in -(k as i64 - 1)..=(k as i64 - 1) {
            let di = (d + n as i64) as usize;
            for z in 0..k {
                let p = cur[di][z];
                if p == 0.0 {
                    continue;
                }
                if q_step > 0.0 {
                    next[di + 1][z] += p * q_step;
                    next[di - 1][z] += p * q_step;
                }
                if d == 0 {
                    next[di][z + 1] += p * q_stay * p_coll;
                    next[di][z] += p * q_stay * (1.0 - p_coll);
                } else {
                    next[di][z] += p * q_stay;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let mut z_law = vec![0.0; n + 1];
    for row in &cur {
        for (z, &p) in row.iter().enumerate() {
            z_law[z] += p;
        }
    }
    PmfTable::new(0, z_law).expect("DP conserves probability mass")
}

/// `log E[exp(t Z_n)]` for either scheme.
///
/// Independent groups have the closed form `n log(1 + (e^t - 1)/M)`. For the
/// local exchange scheme the mgf is computed by a dynamic program over the
/// offset-walk marginal alone, collecting the factor `1 + (e^t - 1) p_coll`
/// on every 0 -> 0 transition; O(n^2), and a shared scale offset keeps the
/// accumulator in range for horizons of 1e4 and beyond.
pub fn z_mgf(spec: &ZLawSpec, t: f64) -> f64 {
    let n = spec.horizon;
    if n == 0 || t == 0.0 {
        return 0.0;
    }
    match spec.scheme.kind {
        SchemeKind::Ibpf => n as f64 * (t.exp_m1() / spec.scheme.group_size as f64).ln_1p(),
        SchemeKind::Lepf => {
            let (q_step, q_stay) = (spec.q_step(), spec.q_stay());
            let factor = 1.0 + t.exp_m1() * spec.p_coll();
            let mut cur = vec![0.0f64; 2 * n + 1];
            cur[n] = 1.0;
            let mut next = vec![0.0f64; 2 * n + 1];
            let mut scale_log = 0.0;
            for k in 1..=n {
                next.iter_mut().for_each(|x| *x = 0.0);
                for d in -(k as i64 - 1)..=(k as i64 - 1) {
                    let di = (d + n as i64) as usize;
                    let p = cur[di];
                    if p == 0.0 {
                        continue;
                    }
                    next[di + 1] += p * q_step;
                    next[di - 1] += p * q_step;
                    next[di] += p * q_stay * if d == 0 { factor } else { 1.0 };
                }
                std::mem::swap(&mut cur, &mut next);
                let max = cur.iter().cloned().fold(0.0f64, f64::max);
                if !(1e-100..=1e100).contains(&max) && max > 0.0 {
                    for x in cur.iter_mut() {
                        *x /= max;
                    }
                    scale_log += max.ln();
                }
            }
            scale_log + cur.iter().sum::<f64>().ln()
        }
    }
}

/// One sampled pair of backward chains: the collision count and the full
/// collision-indicator sequence, indexed by chain time 0..=n (entry n is the
/// starting pair, which is not counted in `collisions`).
#[derive(Debug, Clone)]
pub struct IjSample {
    pub collisions: u64,
    pub eps: Vec<bool>,
}

/// Simulate the bivariate backward chain from `(u, v)` for `n` steps: each
/// chain independently draws its predecessor uniformly from the M-window of
/// its current index.
pub fn sample_ij_chain(
    scheme: InteractionScheme,
    n: usize,
    start: (i64, i64),
    rng: &mut dyn RngCore,
) -> IjSample {
    let m = scheme.group_size as i64;
    let (mut i, mut j) = start;
    let mut eps = vec![false; n + 1];
    eps[n] = i == j;
    let mut collisions = 0u64;
    for k in (0..n).rev() {
        i = scheme.alpha_infinity_row(i).start + rng.random_range(0..m);
        j = scheme.alpha_infinity_row(j).start + rng.random_range(0..m);
        let hit = i == j;
        eps[k] = hit;
        collisions += hit as u64;
    }
    IjSample { collisions, eps }
}

/// Reduced state of the pair chain: block offset `d` and collision flag `e`.
/// `e` can be set only when the offset is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DEState {
    pub d: i64,
    pub e: bool,
}

/// Initial reduced state for the pair started at `(u, v)`:
/// `d = floor((u-1)/M) - floor((v-1)/M)`, `e = [u == v]`.
pub fn de_initial(u: i64, v: i64, group_size: usize) -> DEState {
    let m = group_size as i64;
    let d = (u - 1).div_euclid(m) - (v - 1).div_euclid(m);
    let e = u == v;
    debug_assert!(!e || d == 0);
    DEState { d, e }
}

/// Exact one-step transition law of the offset walk from `d`: a list of
/// `(new_d, probability)` pairs.
pub fn d_transition_probs(spec: &ZLawSpec, d: i64) -> Vec<(i64, f64)> {
    match spec.scheme.kind {
        SchemeKind::Ibpf => vec![(d, 1.0)],
        SchemeKind::Lepf => {
            vec![(d - 1, spec.q_step()), (d, spec.q_stay()), (d + 1, spec.q_step())]
        }
    }
}

/// Probability that the collision flag fires on a transition `d_prev ->
/// d_new` of the offset walk: `p_coll` on 0 -> 0, zero otherwise (disjoint
/// donor windows make a collision impossible when the blocks differ).
pub fn collision_prob(spec: &ZLawSpec, d_prev: i64, d_new: i64) -> f64 {
    if d_prev == 0 && d_new == 0 {
        spec.p_coll()
    } else {
        0.0
    }
}

/// Sample one step of the reduced chain.
pub fn de_step(spec: &ZLawSpec, state: DEState, rng: &mut dyn RngCore) -> DEState {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut new_d = state.d;
    for (cand, p) in d_transition_probs(spec, state.d) {
        acc += p;
        if u < acc {
            new_d = cand;
            break;
        }
    }
    let e = collision_prob(spec, state.d, new_d) > rng.random::<f64>();
    DEState { d: new_d, e }
}

/// Outcome of a chi-square goodness-of-fit test of an observed histogram
/// against a reference pmf. Bins are pooled left to right until each pooled
/// bin has expected count at least 5.
#[derive(Debug, Clone)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    pub dof: usize,
    pub critical: f64,
    pub passed: bool,
}

/// Chi-square test at significance `level` (e.g. 0.001) of `observed`
/// counts, where `observed[k]` is the count of value `expected.min_value() +
/// k`. Counts beyond the pmf support fail the test outright.
pub fn chi_square_test(observed: &[u64], expected: &PmfTable, level: f64) -> ChiSquareOutcome {
    let support = expected.iter().count();
    let out_of_support: u64 = observed.iter().skip(support).copied().sum();
    if out_of_support > 0 {
        return ChiSquareOutcome { statistic: f64::INFINITY, dof: 1, critical: 0.0, passed: false };
    }
    let total: u64 = observed.iter().sum();
    let mut bins: Vec<(f64, f64)> = Vec::new(); // (observed, expected)
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    for (k, (_, p)) in expected.iter().enumerate() {
        acc_obs += observed.get(k).copied().unwrap_or(0) as f64;
        acc_exp += p * total as f64;
        if acc_exp >= 5.0 {
            bins.push((acc_obs, acc_exp));
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    // Fold any small remainder into the last bin.
    if acc_exp > 0.0 || acc_obs > 0.0 {
        if let Some(last) = bins.last_mut() {
            last.0 += acc_obs;
            last.1 += acc_exp;
        } else {
            bins.push((acc_obs, acc_exp));
        }
    }
    let statistic: f64 = bins.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len().saturating_sub(1).max(1);
    let critical = ChiSquared::new(dof as f64).expect("dof >= 1").inverse_cdf(1.0 - level);
    ChiSquareOutcome { statistic, dof, critical, passed: statistic <= critical }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn lepf_spec(m: usize, theta: usize, n: usize) -> ZLawSpec {
        ZLawSpec::new(InteractionScheme::lepf(m, theta).unwrap(), n)
    }

    fn ibpf_spec(m: usize, n: usize) -> ZLawSpec {
        ZLawSpec::new(InteractionScheme::ibpf(m).unwrap(), n)
    }

    #[test]
    fn derived_probabilities_are_consistent() {
        for m in 2..=20usize {
            for theta in 1..m {
                let spec = lepf_spec(m, theta, 1);
                assert_relative_eq!(
                    spec.q_stay() + 2.0 * spec.q_step(),
                    1.0,
                    max_relative = 1e-14
                );
                assert!(spec.p_coll() > 0.0 && spec.p_coll() <= 1.0);
                // q_stay * p_coll collapses to 1/M.
                assert_relative_eq!(
                    spec.q_stay() * spec.p_coll(),
                    1.0 / m as f64,
                    max_relative = 1e-14
                );
            }
        }
    }

    #[test]
    fn ibpf_pmf_examples() {
        let pmf = z_pmf_ibpf(0, 4).unwrap();
        assert_eq!(pmf.prob(0), 1.0);

        let pmf = z_pmf_ibpf(1, 3).unwrap();
        assert_relative_eq!(pmf.prob(0), 2.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(pmf.prob(1), 1.0 / 3.0, max_relative = 1e-12);

        let pmf = z_pmf_ibpf(2, 2).unwrap();
        for (z, expected) in [(0, 0.25), (1, 0.5), (2, 0.25)] {
            assert_relative_eq!(pmf.prob(z), expected, max_relative = 1e-12);
        }
    }

    /// Enumerate all sign sequences of a symmetric walk and count returns to
    /// zero: the combinatorial oracle for the closed-form pmf.
    fn rwz_by_enumeration(n: usize) -> Vec<f64> {
        let mut counts = vec![0u64; n / 2 + 1];
        for walk in 0..(1u64 << n) {
            let mut position = 0i64;
            let mut zeros = 0usize;
            for step in 0..n {
                position += if walk >> step & 1 == 1 { 1 } else { -1 };
                zeros += (position == 0) as usize;
            }
            counts[zeros] += 1;
        }
        counts.iter().map(|&c| c as f64 / (1u64 << n) as f64).collect()
    }

    #[test]
    fn rwz_matches_walk_enumeration() {
        for n in 0..=12 {
            let pmf = rwz_pmf(n).unwrap();
            let oracle = rwz_by_enumeration(n);
            for (x, expected) in oracle.iter().enumerate() {
                assert_relative_eq!(pmf.prob(x as i64), expected, epsilon = 1e-12);
            }
        }
        // Spot values: n = 0 and n = 1 are point masses, n = 2 is fair.
        assert_eq!(rwz_pmf(0).unwrap().prob(0), 1.0);
        assert_eq!(rwz_pmf(1).unwrap().prob(0), 1.0);
        assert_relative_eq!(rwz_pmf(2).unwrap().prob(0), 0.5, max_relative = 1e-12);
        assert_relative_eq!(rwz_pmf(2).unwrap().prob(1), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn rwz_large_n_stays_normalized() {
        // The central binomial coefficient at n = 200 is far beyond linear
        // f64 range; normalization only holds if logs are used throughout.
        let pmf = rwz_pmf(200).unwrap();
        let total: f64 = pmf.iter().map(|(_, p)| p).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    /// Polya-urn oracle: P(success at draw p | b successes so far) =
    /// (1 + s + b) / (n - v + p), enumerated over all outcome sequences.
    fn polya_urn_law(v: usize, s: usize, n: usize) -> Vec<f64> {
        let mut law = vec![0.0; v + 1];
        let mut stack = vec![(0usize, 0usize, 1.0f64)]; // (draws, successes, prob)
        while let Some((p, b, prob)) = stack.pop() {
            if p == v {
                law[b] += prob;
                continue;
            }
            let succ = (1.0 + s as f64 + b as f64) / (n as f64 - v as f64 + p as f64 + 1.0);
            stack.push((p + 1, b + 1, prob * succ));
            stack.push((p + 1, b, prob * (1.0 - succ)));
        }
        law
    }

    #[test]
    fn beta_binomial_matches_polya_urn() {
        for (v, s, n) in [(5, 2, 12), (4, 0, 9), (6, 3, 13), (3, 1, 8)] {
            let pmf = beta_binomial_pmf(v, s as f64 + 1.0, (n - v - s) as f64).unwrap();
            let urn = polya_urn_law(v, s, n);
            for (b, expected) in urn.iter().enumerate() {
                assert_relative_eq!(pmf.prob(b as i64), expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn beta_binomial_conventions_and_errors() {
        // (v, 1, 0) is the point mass at v.
        let pmf = beta_binomial_pmf(7, 1.0, 0.0).unwrap();
        assert_eq!(pmf.prob(7), 1.0);
        // (n, 1, 1) is uniform.
        let pmf = beta_binomial_pmf(9, 1.0, 1.0).unwrap();
        for k in 0..=9 {
            assert_relative_eq!(pmf.prob(k), 0.1, max_relative = 1e-12);
        }
        // (0, a, b) is the point mass at 0.
        assert_eq!(beta_binomial_pmf(0, 2.5, 3.5).unwrap().prob(0), 1.0);
        // Invalid parameters are rejected.
        assert!(beta_binomial_pmf(3, 0.0, 1.0).is_err());
        assert!(beta_binomial_pmf(3, 1.0, -0.5).is_err());
        assert!(beta_binomial_pmf(3, 2.0, 0.0).is_err());
    }

    #[test]
    fn lepf_mixture_examples() {
        assert_eq!(z_pmf_lepf_mixture(0, 3, 1).unwrap().prob(0), 1.0);

        // n = 1, M = 3, theta = 1: one-step window enumeration gives
        // P(Z = 1) = q_stay * p_coll = (5/9)(3/5) = 1/3.
        let pmf = z_pmf_lepf_mixture(1, 3, 1).unwrap();
        assert_relative_eq!(pmf.prob(0), 2.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(pmf.prob(1), 1.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn all_collisions_probability_is_m_to_minus_n() {
        for (m, theta) in [(2, 1), (3, 1), (3, 2), (5, 2)] {
            for n in 1..=12usize {
                let expected = (m as f64).powi(-(n as i32));
                let dp = z_pmf_lepf_dp(n, m, theta).unwrap();
                assert_relative_eq!(dp.prob(n as i64), expected, max_relative = 1e-12);
                let mixture = z_pmf_lepf_mixture(n, m, theta).unwrap();
                assert_relative_eq!(mixture.prob(n as i64), expected, max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn dp_agrees_with_mixture_at_unit_test_sizes() {
        for (m, theta) in [(2, 1), (3, 1), (3, 2), (5, 2)] {
            for n in 0..=25usize {
                let dp = z_pmf_lepf_dp(n, m, theta).unwrap();
                let mixture = z_pmf_lepf_mixture(n, m, theta).unwrap();
                let tv = dp.total_variation(&mixture);
                assert!(tv <= 1e-10, "M={m} theta={theta} n={n}: tv={tv}");
            }
        }
    }

    #[test]
    fn dp_single_step_collision_probability_is_one_over_m() {
        for (m, theta) in [(2, 1), (4, 3), (7, 2)] {
            let pmf = z_pmf_lepf_dp(1, m, theta).unwrap();
            assert_relative_eq!(pmf.prob(1), 1.0 / m as f64, max_relative = 1e-13);
        }
        assert_eq!(z_pmf_lepf_dp(0, 4, 1).unwrap().prob(0), 1.0);
    }

    #[test]
    fn dp_specializes_to_binomial_for_ibpf() {
        let spec = ibpf_spec(4, 17);
        let dp = z_pmf_dp(&spec);
        let binomial = z_pmf_ibpf(17, 4).unwrap();
        assert!(dp.total_variation(&binomial) <= 1e-12);
    }

    #[test]
    fn mgf_examples() {
        // t = 0 gives log 1 for any spec.
        assert_eq!(z_mgf(&lepf_spec(3, 1, 25), 0.0), 0.0);
        assert_eq!(z_mgf(&ibpf_spec(5, 25), 0.0), 0.0);

        // Independent scheme: closed form n log(1 + c/M) with c = e^t - 1.
        let t = 0.37f64;
        let c = t.exp() - 1.0;
        for (m, n) in [(2usize, 30usize), (20, 150)] {
            let log_mgf = z_mgf(&ibpf_spec(m, n), t);
            assert_relative_eq!(
                log_mgf,
                n as f64 * (1.0 + c / m as f64).ln(),
                max_relative = 1e-12
            );
        }

        // Crude bound for the local exchange scheme: E >= e^{nt} / M^n.
        for n in [5usize, 15, 40] {
            let spec = lepf_spec(3, 1, n);
            let lower = n as f64 * t - n as f64 * 3.0f64.ln();
            assert!(z_mgf(&spec, t) >= lower - 1e-12);
        }
    }

    #[test]
    fn mgf_matches_pmf_summation() {
        for t in [-0.8, 0.2, 0.1855077] {
            for (m, theta, n) in [(2, 1, 10), (3, 2, 50), (20, 10, 100)] {
                let spec = lepf_spec(m, theta, n);
                let via_dp = z_mgf(&spec, t);
                let via_pmf = z_pmf_lepf_dp(n, m, theta).unwrap().log_mgf(t);
                assert_relative_eq!(via_dp, via_pmf, epsilon = 1e-9, max_relative = 1e-9);
            }
            for (m, n) in [(2, 40), (5, 100)] {
                let spec = ibpf_spec(m, n);
                assert_relative_eq!(
                    z_mgf(&spec, t),
                    z_pmf_ibpf(n, m).unwrap().log_mgf(t),
                    epsilon = 1e-9,
                    max_relative = 1e-9
                );
            }
        }
    }

    #[test]
    fn mgf_is_monotone_in_horizon_for_positive_t() {
        let t = 0.1855077;
        let mut previous = 0.0;
        for n in 1..=60 {
            let value = z_mgf(&lepf_spec(3, 1, n), t);
            assert!(value >= previous - 1e-13, "n={n}");
            previous = value;
        }
    }

    #[test]
    fn mgf_survives_long_horizons() {
        let t = 0.1855077;
        let spec = lepf_spec(20, 1, 10_000);
        let log_mgf = z_mgf(&spec, t);
        assert!(log_mgf.is_finite());
        assert!(log_mgf > z_mgf(&lepf_spec(20, 1, 1000), t));
        // A larger t pushes intermediate values around e^700 and beyond,
        // which only the shared scale offset survives.
        let big = z_mgf(&spec, 2.5);
        assert!(big.is_finite() && big > 1000.0);
    }

    #[test]
    fn sampled_single_step_collision_frequency() {
        let scheme = InteractionScheme::lepf(4, 1).unwrap();
        let mut rng = StdRng::seed_from_u64(11);
        let samples = 100_000;
        let mut hits = 0u64;
        for _ in 0..samples {
            hits += sample_ij_chain(scheme, 1, (3, 3), &mut rng).collisions;
        }
        let p = 0.25;
        let se = (p * (1.0 - p) / samples as f64).sqrt();
        let freq = hits as f64 / samples as f64;
        assert!((freq - p).abs() <= 3.0 * se, "freq={freq}");
    }

    #[test]
    fn distant_starts_never_collide() {
        let scheme = InteractionScheme::lepf(3, 2).unwrap();
        let n = 4;
        let beta = scheme.band_width() as i64;
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..2000 {
            let sample = sample_ij_chain(scheme, n, (0, 2 * n as i64 * beta + 1), &mut rng);
            assert_eq!(sample.collisions, 0);
            assert!(sample.eps.iter().all(|&e| !e));
        }
    }

    #[test]
    fn sampler_matches_dp_law() {
        let (m, theta, n) = (3, 1, 12);
        let scheme = InteractionScheme::lepf(m, theta).unwrap();
        let mut rng = StdRng::seed_from_u64(99);
        let samples = 200_000usize;
        let mut counts = vec![0u64; n + 1];
        for _ in 0..samples {
            let z = sample_ij_chain(scheme, n, (1, 1), &mut rng).collisions;
            counts[z as usize] += 1;
        }
        let expected = z_pmf_lepf_dp(n, m, theta).unwrap();
        let outcome = chi_square_test(&counts, &expected, 0.001);
        assert!(
            outcome.passed,
            "chi-square {} > critical {} at dof {}",
            outcome.statistic, outcome.critical, outcome.dof
        );
    }

    #[test]
    fn de_state_examples() {
        assert_eq!(de_initial(5, 5, 3), DEState { d: 0, e: true });
        assert_eq!(de_initial(1, 4, 3), DEState { d: -1, e: false });

        let spec = lepf_spec(5, 2, 1);
        let probs = d_transition_probs(&spec, 0);
        assert_eq!(probs.len(), 3);
        assert_relative_eq!(probs[0].1, spec.q_step());
        assert_relative_eq!(probs[1].1, spec.q_stay());
        assert_relative_eq!(probs[2].1, spec.q_step());

        assert_eq!(collision_prob(&spec, 0, 0), spec.p_coll());
        assert_eq!(collision_prob(&spec, 0, 1), 0.0);
        assert_eq!(collision_prob(&spec, 2, 2), 0.0);

        // Sampling the reduced chain respects the flag invariant.
        let mut rng = StdRng::seed_from_u64(3);
        let mut state = DEState { d: 0, e: true };
        for _ in 0..500 {
            state = de_step(&spec, state, &mut rng);
            assert!(!state.e || state.d == 0);
        }
    }

    #[test]
    fn reduced_chain_matches_direct_sampler() {
        // The (offset, flag) reduction must reproduce the collision law of
        // the full index pair, including from a general (u != v) start.
        let (m, theta, n) = (3, 1, 8);
        let scheme = InteractionScheme::lepf(m, theta).unwrap();
        let spec = ZLawSpec::new(scheme, n);
        let samples = 200_000usize;
        for start in [(2i64, 2i64), (1, 3), (1, 4), (2, -5)] {
            let mut rng = StdRng::seed_from_u64(17);
            let mut direct = vec![0u64; n + 1];
            for _ in 0..samples {
                let z = sample_ij_chain(scheme, n, start, &mut rng).collisions;
                direct[z as usize] += 1;
            }
            let mut reduced = vec![0u64; n + 1];
            for _ in 0..samples {
                let mut state = de_initial(start.0, start.1, m);
                let mut z = 0usize;
                for _ in 0..n {
                    state = de_step(&spec, state, &mut rng);
                    z += state.e as usize;
                }
                reduced[z as usize] += 1;
            }
            // Cell-wise frequency comparison at 4 pooled binomial sigmas.
            for z in 0..=n {
                let p_hat = reduced[z] as f64 / samples as f64;
                let q_hat = direct[z] as f64 / samples as f64;
                let se = ((p_hat * (1.0 - p_hat) + q_hat * (1.0 - q_hat)) / samples as f64)
                    .sqrt()
                    .max(1e-6);
                assert!(
                    (p_hat - q_hat).abs() <= 4.0 * se,
                    "start {start:?}, z={z}: {p_hat} vs {q_hat}"
                );
            }
        }
    }

    #[test]
    fn start_point_invariance_of_sampled_law() {
        let (m, theta, n) = (3, 1, 10);
        let scheme = InteractionScheme::lepf(m, theta).unwrap();
        let expected = z_pmf_lepf_dp(n, m, theta).unwrap();
        let samples = 120_000usize;
        for (idx, u) in [0i64, 1, m as i64 - 1, 7 * m as i64 + 2].into_iter().enumerate() {
            let mut rng = StdRng::seed_from_u64(1000 + idx as u64);
            let mut counts = vec![0u64; n + 1];
            for _ in 0..samples {
                let z = sample_ij_chain(scheme, n, (u, u), &mut rng).collisions;
                counts[z as usize] += 1;
            }
            let outcome = chi_square_test(&counts, &expected, 0.001);
            assert!(outcome.passed, "start u={u}: statistic {}", outcome.statistic);
        }
    }

    #[test]
    fn pmf_table_enforces_normalization() {
        assert!(PmfTable::new(0, vec![0.5, 0.4]).is_err());
        assert!(PmfTable::new(0, vec![0.5, -0.1, 0.6]).is_err());
        assert!(PmfTable::new(0, vec![0.5, 0.5]).is_ok());
    }
}
