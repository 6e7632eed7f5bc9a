//! Asymptotic variance of the particle estimates, by every route that can
//! cross-check another.
//!
//! The central object is the variance of the Gaussian limit of
//! `sqrt(N) (pi_n^N(phi) - pi_n(phi))` as the number of groups grows. For a
//! finite-state model it equals
//!
//! ```text
//! sigma_n^2 = 1/(gamma_n(1)^2 M) * sum over starts (u, u+v)
//!     E[ pi0x2 C_{eps_0} Q_1x2 C_{eps_1} ... Q_nx2 C_{eps_n} (phibar x phibar) ]
//! ```
//!
//! where the expectation runs over the collision indicators `eps` of a pair
//! of backward index chains started at `(u, u+v)`, `C_1` pulls a two-point
//! function onto the diagonal, and `Q_k` is `diag(g_{k-1}) F`. Routes
//! implemented:
//!
//! * [`sigma2_theorem1`] enumerates the 2^(n+1) indicator sequences, scores
//!   each with the exact reduced-chain law (offset walk + collision flag),
//!   and evaluates the tensor functional once per sequence;
//! * [`sigma2_theorem1_bruteforce`] enumerates raw backward path pairs with
//!   no reduction, validating the reduced chain;
//! * [`second_moment_finite_n`] computes the exact finite-N second moment
//!   through the sparse finite interaction matrix, which approaches
//!   `sigma_n^2 / N` as the group count grows;
//! * [`sigma2_simple_model`] / [`sigma2_ibpf_closed`] are the closed forms
//!   for the iid model, where everything collapses to the collision-count
//!   mgf.

use std::collections::BTreeMap;

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::collision::{z_mgf, ZLawSpec};
use crate::hmm::FiniteHmm;
use crate::interaction::{AlphaMatrix, InteractionScheme, SchemeKind};
use crate::{Error, Result};

/// Horizon cap for the indicator-sequence enumeration (2^(n+1) terms).
pub const THEOREM1_MAX_HORIZON: usize = 14;

/// How a variance value was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceMethod {
    SimpleClosed,
    IbpfClosed,
    Theorem1Dp,
    Theorem1BruteForce,
    FiniteNTensor,
    MonteCarlo,
}

impl std::fmt::Display for VarianceMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            VarianceMethod::SimpleClosed => "simple_closed",
            VarianceMethod::IbpfClosed => "ibpf_closed",
            VarianceMethod::Theorem1Dp => "theorem1_dp",
            VarianceMethod::Theorem1BruteForce => "theorem1_bruteforce",
            VarianceMethod::FiniteNTensor => "finiteN_tensor",
            VarianceMethod::MonteCarlo => "monte_carlo",
        };
        write!(f, "{name}")
    }
}

/// A computed asymptotic variance with provenance.
///
/// Strict positivity is an assumption of the limit theorem, not a theorem:
/// it is reported through `strictly_positive`, never enforced.
#[derive(Debug, Clone)]
pub struct VarianceResult {
    pub sigma2: f64,
    pub method: VarianceMethod,
    /// Number of scored terms (indicator sequences, path pairs, ...).
    pub terms: usize,
    pub strictly_positive: bool,
}

impl VarianceResult {
    fn new(sigma2: f64, method: VarianceMethod, terms: usize) -> Self {
        Self { sigma2, method, terms, strictly_positive: sigma2 > 1e-12 }
    }
}

/// A test function on a finite state space.
#[derive(Debug, Clone)]
pub struct TestFunction {
    values: Vec<f64>,
}

impl TestFunction {
    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// `phi(x) = x` on state indices.
    pub fn identity(state_count: usize) -> Self {
        Self { values: (0..state_count).map(|x| x as f64).collect() }
    }

    /// Indicator of one state.
    pub fn indicator(state_count: usize, state: usize) -> Self {
        let mut values = vec![0.0; state_count];
        values[state] = 1.0;
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Centered values `phi - pi_n(phi)` against the exact filter at the
    /// evaluation horizon.
    pub fn centered(&self, model: &FiniteHmm, n: usize) -> Result<Vec<f64>> {
        let pi = model.prediction_filter(n)?;
        Ok(centered_against(&self.values, &pi))
    }
}

/// `phi - mu(phi)` for a probability vector `mu`.
pub fn centered_against(phi: &[f64], mu: &[f64]) -> Vec<f64> {
    let mean: f64 = phi.iter().zip(mu).map(|(p, m)| p * m).sum();
    phi.iter().map(|p| p - mean).collect()
}

/// `mu((phi - mu(phi))^2)`, the centered second moment.
pub fn centered_second_moment(mu: &[f64], phi: &[f64]) -> f64 {
    let mean: f64 = phi.iter().zip(mu).map(|(p, m)| p * m).sum();
    phi.iter().zip(mu).map(|(p, m)| m * (p - mean) * (p - mean)).sum()
}

/// Evaluator of the tensor functional
/// `F(eps) = pi0x2 C_{eps_0} Q_1x2 C_{eps_1} ... Q_nx2 C_{eps_n} (phibar x phibar)`
/// for a fixed model, test function and horizon; `eps` is encoded as a bit
/// mask with bit k holding `eps_k`.
pub struct TensorFunctional {
    state_count: usize,
    pi0: Vec<f64>,
    phibar: Vec<f64>,
    /// q_matrices[k-1] is Q_k = diag(g_{k-1}) F, row-major.
    q_matrices: Vec<Vec<f64>>,
    horizon: usize,
}

impl TensorFunctional {
    /// Build for `model`, centering `phi` against the exact filter at
    /// horizon `n`.
    pub fn new(model: &FiniteHmm, phi: &[f64], n: usize) -> Result<Self> {
        let s = model.state_count();
        if phi.len() != s {
            return Err(Error::InvalidParameters(format!(
                "test function has {} entries, model has {s} states",
                phi.len()
            )));
        }
        let pi_n = model.prediction_filter(n)?;
        let phibar = centered_against(phi, &pi_n);
        let mut q_matrices = Vec::with_capacity(n);
        for k in 1..=n {
            let g = model.likelihood_at(k - 1)?;
            let mut q = vec![0.0; s * s];
            for x in 0..s {
                for y in 0..s {
                    q[x * s + y] = g[x] * model.transition_row(x)[y];
                }
            }
            q_matrices.push(q);
        }
        Ok(Self { state_count: s, pi0: model.initial().to_vec(), phibar, q_matrices, horizon: n })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Evaluate one indicator sequence. O(n S^3).
    pub fn evaluate(&self, mask: usize) -> f64 {
        let s = self.state_count;
        // w(x, y) starts as phibar(x) phibar(y).
        let mut w = vec![0.0; s * s];
        for x in 0..s {
            for y in 0..s {
                w[x * s + y] = self.phibar[x] * self.phibar[y];
            }
        }
        for k in (1..=self.horizon).rev() {
            if mask >> k & 1 == 1 {
                apply_diagonal_pullback(&mut w, s);
            }
            w = apply_tensor_square(&self.q_matrices[k - 1], &w, s);
        }
        if mask & 1 == 1 {
            apply_diagonal_pullback(&mut w, s);
        }
        let mut total = 0.0;
        for x in 0..s {
            for y in 0..s {
                total += self.pi0[x] * self.pi0[y] * w[x * s + y];
            }
        }
        total
    }

    /// All 2^(n+1) values, indexed by mask.
    pub fn table(&self) -> Vec<f64> {
        (0..1usize << (self.horizon + 1))
            .into_par_iter()
            .map(|mask| self.evaluate(mask))
            .collect()
    }
}

/// `(C_1 w)(x, y) = w(x, x)`.
fn apply_diagonal_pullback(w: &mut [f64], s: usize) {
    for x in 0..s {
        let diag = w[x * s + x];
        for y in 0..s {
            w[x * s + y] = diag;
        }
    }
}

/// `(Q (x) Q) w` as the matrix product Q W Q^T.
fn apply_tensor_square(q: &[f64], w: &[f64], s: usize) -> Vec<f64> {
    let mut tmp = vec![0.0; s * s];
    for x in 0..s {
        for xp in 0..s {
            let qxx = q[x * s + xp];
            if qxx == 0.0 {
                continue;
            }
            for yp in 0..s {
                tmp[x * s + yp] += qxx * w[xp * s + yp];
            }
        }
    }
    let mut out = vec![0.0; s * s];
    for x in 0..s {
        for y in 0..s {
            let mut acc = 0.0;
            for yp in 0..s {
                acc += tmp[x * s + yp] * q[y * s + yp];
            }
            out[x * s + y] = acc;
        }
    }
    out
}

/// Block index of an integer label under the 1-based convention:
/// `floor((x-1)/M)`, so label 0 sits at the top of block -1.
fn block_of(x: i64, group_size: usize) -> i64 {
    (x - 1).div_euclid(group_size as i64)
}

/// Exact probability of one indicator sequence given the start offset and
/// the start collision flag. Bit k of `mask` is the indicator at chain time
/// k; bit n is the start and must match `e0`.
fn eps_prob(spec: &ZLawSpec, d0: i64, e0: bool, mask: usize) -> f64 {
    let n = spec.horizon;
    if (mask >> n & 1 == 1) != e0 {
        return 0.0;
    }
    let p_coll = spec.p_coll();
    match spec.scheme.kind {
        SchemeKind::Ibpf => {
            // Offset frozen: collisions are iid Bernoulli(1/M) while the
            // offset is zero, impossible otherwise.
            let mut prob = 1.0;
            for k in 0..n {
                let e = mask >> (n - 1 - k) & 1 == 1;
                if d0 == 0 {
                    prob *= if e { p_coll } else { 1.0 - p_coll };
                } else if e {
                    return 0.0;
                }
            }
            prob
        }
        SchemeKind::Lepf => {
            let (q_step, q_stay) = (spec.q_step(), spec.q_stay());
            // DP over the offset walk; vector index is d + n - d0.
            let width = 2 * n + 1;
            let center = n as i64 - d0;
            let mut cur = vec![0.0f64; width];
            cur[(d0 + center) as usize] = 1.0;
            let mut next = vec![0.0f64; width];
            for j in 1..=n {
                let e = mask >> (n - j) & 1 == 1;
                next.iter_mut().for_each(|x| *x = 0.0);
                for idx in 0..width {
                    let p = cur[idx];
                    if p == 0.0 {
                        continue;
                    }
                    let d = idx as i64 - center;
                    // Moves can never fire the flag.
                    if !e {
                        if idx + 1 < width {
                            next[idx + 1] += p * q_step;
                        }
                        if idx >= 1 {
                            next[idx - 1] += p * q_step;
                        }
                    }
                    let stay_factor = if d == 0 {
                        if e {
                            p_coll
                        } else {
                            1.0 - p_coll
                        }
                    } else if e {
                        0.0
                    } else {
                        1.0
                    };
                    next[idx] += p * q_stay * stay_factor;
                }
                std::mem::swap(&mut cur, &mut next);
            }
            cur.iter().sum()
        }
    }
}

/// Start pairs `(u, u + v)` of the limit formula, grouped by the reduced
/// initial state (offset, flag) with multiplicities.
fn start_groups(scheme: InteractionScheme, n: usize) -> BTreeMap<(i64, bool), u64> {
    let m = scheme.group_size;
    let window = (2 * n * scheme.band_width()) as i64;
    let mut groups: BTreeMap<(i64, bool), u64> = BTreeMap::new();
    for u in 0..m as i64 {
        for v in -window..=window {
            let d0 = block_of(u, m) - block_of(u + v, m);
            *groups.entry((d0, v == 0)).or_insert(0) += 1;
        }
    }
    groups
}

/// Asymptotic variance of the prediction estimate for a finite-state model,
/// by indicator-sequence enumeration with the exact reduced-chain law.
///
/// `n = 0` is the iid case `pi0((phi - pi0(phi))^2)`. For `n >= 1` the
/// 2^(n+1) sequences are scored against memoized tensor-functional values;
/// horizons beyond [`THEOREM1_MAX_HORIZON`] are refused.
pub fn sigma2_theorem1(
    model: &FiniteHmm,
    phi: &[f64],
    n: usize,
    scheme: InteractionScheme,
) -> Result<VarianceResult> {
    if n == 0 {
        let sigma2 = centered_second_moment(model.initial(), phi);
        return Ok(VarianceResult::new(sigma2, VarianceMethod::Theorem1Dp, 1));
    }
    if n > THEOREM1_MAX_HORIZON {
        return Err(Error::BudgetExceeded(format!(
            "horizon {n} needs 2^{} indicator sequences; the cap is n = {THEOREM1_MAX_HORIZON}",
            n + 1
        )));
    }
    let functional = TensorFunctional::new(model, phi, n)?;
    let f_table = functional.table();
    let spec = ZLawSpec::new(scheme, n);
    let groups = start_groups(scheme, n);

    // Parallel over reduced starts, fixed-order reduction afterwards.
    let entries: Vec<((i64, bool), u64)> = groups.into_iter().collect();
    let per_start: Vec<f64> = entries
        .par_iter()
        .map(|&((d0, e0), _)| {
            f_table
                .iter()
                .enumerate()
                .map(|(mask, &f)| if f == 0.0 { 0.0 } else { eps_prob(&spec, d0, e0, mask) * f })
                .sum::<f64>()
        })
        .collect();
    let total: f64 =
        entries.iter().zip(&per_start).map(|(&(_, count), &term)| count as f64 * term).sum();

    let log_gamma = model.log_gamma_normalizer(n)?;
    let sigma2 = total / ((2.0 * log_gamma).exp() * scheme.group_size as f64);
    Ok(VarianceResult::new(sigma2, VarianceMethod::Theorem1Dp, f_table.len() * per_start.len()))
}

/// All backward paths of the limiting chain from `start`: vectors
/// `[i_n, i_{n-1}, ..., i_0]`, each carrying probability `M^-n`.
fn enumerate_limit_paths(scheme: InteractionScheme, n: usize, start: i64) -> Vec<Vec<i64>> {
    let mut paths = vec![vec![start]];
    for _ in 0..n {
        let mut grown = Vec::with_capacity(paths.len() * scheme.group_size);
        for path in &paths {
            let window = scheme.alpha_infinity_row(*path.last().expect("nonempty"));
            for j in window.iter() {
                let mut next = path.clone();
                next.push(j);
                grown.push(next);
            }
        }
        paths = grown;
    }
    paths
}

/// Expectation of the tensor functional over raw path pairs from `(u, v)`,
/// with no chain reduction.
fn bruteforce_expectation(
    scheme: InteractionScheme,
    n: usize,
    u: i64,
    v: i64,
    f_table: &[f64],
) -> f64 {
    let paths_i = enumerate_limit_paths(scheme, n, u);
    let paths_j = enumerate_limit_paths(scheme, n, v);
    let weight = (scheme.group_size as f64).powi(-2 * n as i32);
    let mut total = 0.0;
    for pi in &paths_i {
        for pj in &paths_j {
            let mut mask = 0usize;
            for (level, (a, b)) in pi.iter().zip(pj).enumerate() {
                if a == b {
                    mask |= 1 << (n - level); // level l is chain time n - l
                }
            }
            total += f_table[mask];
        }
    }
    total * weight
}

/// Asymptotic variance by direct enumeration of all backward path pairs
/// with nonzero limiting weight: the oracle that validates the reduced
/// chain in [`sigma2_theorem1`]. Feasible only for `n <= 4`, `M <= 3`.
pub fn sigma2_theorem1_bruteforce(
    model: &FiniteHmm,
    phi: &[f64],
    n: usize,
    scheme: InteractionScheme,
) -> Result<VarianceResult> {
    if n == 0 {
        let sigma2 = centered_second_moment(model.initial(), phi);
        return Ok(VarianceResult::new(sigma2, VarianceMethod::Theorem1BruteForce, 1));
    }
    if n > 4 || scheme.group_size > 3 {
        return Err(Error::BudgetExceeded(format!(
            "path enumeration needs M^2n = {} pairs per start; capped at n <= 4, M <= 3",
            (scheme.group_size as f64).powi(2 * n as i32)
        )));
    }
    let functional = TensorFunctional::new(model, phi, n)?;
    let f_table = functional.table();
    let m = scheme.group_size;
    let window = (2 * n * scheme.band_width()) as i64;
    let starts: Vec<(i64, i64)> =
        (0..m as i64).flat_map(|u| (-window..=window).map(move |v| (u, u + v))).collect();
    let terms: Vec<f64> = starts
        .par_iter()
        .map(|&(u, v)| bruteforce_expectation(scheme, n, u, v, &f_table))
        .collect();
    let total: f64 = terms.iter().sum();
    let log_gamma = model.log_gamma_normalizer(n)?;
    let sigma2 = total / ((2.0 * log_gamma).exp() * m as f64);
    let pairs = starts.len() * (m as u32).pow(2 * n as u32) as usize;
    Ok(VarianceResult::new(sigma2, VarianceMethod::Theorem1BruteForce, pairs))
}

/// Exact finite-N second moment and its normalized form.
#[derive(Debug, Clone)]
pub struct FiniteNSecondMoment {
    /// `E[((1/N) sum_i W_n^i phibar(zeta_n^i))^2]`, exact.
    pub second_moment: f64,
    /// `N * second_moment / gamma_n(1)^2`, which approaches the asymptotic
    /// variance as the group count grows.
    pub normalized: f64,
    pub path_pairs: usize,
}

/// Exact second moment of the unnormalized centered estimate after `n`
/// steps of the filter driven by the finite matrix `alpha`, by full path
/// enumeration (N M^n paths per chain). Tractable for N around 16, n <= 4.
pub fn second_moment_finite_n(
    model: &FiniteHmm,
    phi: &[f64],
    n: usize,
    alpha: &AlphaMatrix,
) -> Result<FiniteNSecondMoment> {
    let m = alpha.scheme.group_size;
    let path_count = alpha.n as f64 * (m as f64).powi(n as i32);
    if path_count * path_count > 1e8 {
        return Err(Error::BudgetExceeded(format!(
            "{path_count} paths per chain is beyond the exact enumeration budget"
        )));
    }
    let functional = TensorFunctional::new(model, phi, n)?;
    let f_table = functional.table();

    // Backward paths through the sparse finite matrix.
    let mut paths: Vec<Vec<usize>> = (0..alpha.n).map(|i| vec![i]).collect();
    for _ in 0..n {
        let mut grown = Vec::with_capacity(paths.len() * m);
        for path in &paths {
            for &(j, _) in alpha.row(*path.last().expect("nonempty")) {
                let mut next = path.clone();
                next.push(j);
                grown.push(next);
            }
        }
        paths = grown;
    }

    let weight = (m as f64).powi(-2 * n as i32);
    let total: f64 = paths
        .par_iter()
        .map(|pi| {
            let mut acc = 0.0;
            for pj in &paths {
                let mut mask = 0usize;
                for (level, (a, b)) in pi.iter().zip(pj).enumerate() {
                    if a == b {
                        mask |= 1 << (n - level);
                    }
                }
                acc += f_table[mask];
            }
            acc
        })
        .sum();
    let second_moment = total * weight / (alpha.n as f64 * alpha.n as f64);
    let log_gamma = model.log_gamma_normalizer(n)?;
    let normalized = alpha.n as f64 * second_moment / (2.0 * log_gamma).exp();
    Ok(FiniteNSecondMoment { second_moment, normalized, path_pairs: paths.len() * paths.len() })
}

/// Simplified-model variance: `phi_var * E[exp(t Z_n)]` with
/// `t = log(1 + c)`; `n = 0` returns `phi_var` itself.
pub fn sigma2_simple_model(
    c: f64,
    n: usize,
    scheme: InteractionScheme,
    phi_var: f64,
) -> Result<VarianceResult> {
    if c < 0.0 || !c.is_finite() {
        return Err(Error::InvalidParameters(format!("c must be nonnegative, got {c}")));
    }
    if n == 0 {
        return Ok(VarianceResult::new(phi_var, VarianceMethod::SimpleClosed, 1));
    }
    let t = c.ln_1p();
    let log_mgf = z_mgf(&ZLawSpec::new(scheme, n), t);
    Ok(VarianceResult::new(phi_var * log_mgf.exp(), VarianceMethod::SimpleClosed, n))
}

/// Closed-form independent-scheme variance `phi_var (1 + c/M)^n`, evaluated
/// in log space.
pub fn sigma2_ibpf_closed(c: f64, n: usize, group_size: usize, phi_var: f64) -> VarianceResult {
    let log_growth = n as f64 * (c / group_size as f64).ln_1p();
    VarianceResult::new(phi_var * log_growth.exp(), VarianceMethod::IbpfClosed, 1)
}

/// Variance ratio of the two schemes at horizon `n`:
/// `R_n = E_ibpf[exp(t Z_n)] / E_lepf[exp(t Z_n)]`, in log space.
pub fn ratio_rn(n: usize, group_size: usize, theta: usize, t: f64) -> Result<f64> {
    let lepf = ZLawSpec::new(InteractionScheme::lepf(group_size, theta)?, n);
    let ibpf = ZLawSpec::new(InteractionScheme::ibpf(group_size)?, n);
    Ok((z_mgf(&ibpf, t) - z_mgf(&lepf, t)).exp())
}

/// One evaluated point of a scaling study curve.
#[derive(Debug, Clone, Copy)]
pub struct ScalingPoint {
    pub n: usize,
    /// Group size used at this point: `max(2, round(n^exponent))`.
    pub group_size: usize,
    /// Shift actually used (clamped into `1..=M-1` for the exchange scheme).
    pub theta: usize,
    /// `E[exp(t Z_n)]`.
    pub value: f64,
}

/// A scaling curve `n -> E[exp(t Z_n)]` with the group size growing as
/// `M(n) = max(2, round(n^exponent))`.
#[derive(Debug, Clone)]
pub struct ScalingCurve {
    pub exponent: f64,
    pub kind: SchemeKind,
    pub points: Vec<ScalingPoint>,
}

impl ScalingCurve {
    /// True if any point needed its shift clamped below the request.
    pub fn theta_clamped(&self, requested: usize) -> bool {
        self.points.iter().any(|p| p.theta != requested)
    }
}

/// Evaluate scaling curves for each exponent on the given horizon grid.
/// Each point is an independent model with its own fixed group size.
pub fn scaling_study(
    exponents: &[f64],
    grid: &[usize],
    t: f64,
    theta: usize,
    kind: SchemeKind,
) -> Result<Vec<ScalingCurve>> {
    if theta == 0 && kind == SchemeKind::Lepf {
        return Err(Error::InvalidParameters("exchange scheme needs theta >= 1".into()));
    }
    exponents
        .iter()
        .map(|&exponent| {
            let points = grid
                .par_iter()
                .map(|&n| {
                    let group_size = ((n as f64).powf(exponent).round() as usize).max(2);
                    let theta_used = match kind {
                        SchemeKind::Ibpf => 0,
                        SchemeKind::Lepf => theta.min(group_size - 1),
                    };
                    let scheme = match kind {
                        SchemeKind::Ibpf => InteractionScheme::ibpf(group_size),
                        SchemeKind::Lepf => InteractionScheme::lepf(group_size, theta_used),
                    }?;
                    let value = z_mgf(&ZLawSpec::new(scheme, n), t).exp();
                    Ok(ScalingPoint { n, group_size, theta: theta_used, value })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ScalingCurve { exponent, kind, points })
        })
        .collect()
}

/// The L_p limit constant `sigma_n / sqrt(M) * sqrt(2) *
/// (Gamma((p+1)/2) / sqrt(pi))^(1/p)` relating replicate moments of the
/// scaled error to the asymptotic standard deviation.
pub fn clt_constant(p: f64, sigma_n: f64, group_size: usize) -> Result<f64> {
    if p < 1.0 {
        return Err(Error::InvalidParameters(format!("need p >= 1, got {p}")));
    }
    let log_bracket = ln_gamma((p + 1.0) / 2.0) - std::f64::consts::PI.ln() / 2.0;
    Ok(sigma_n / (group_size as f64).sqrt() * 2.0f64.sqrt() * (log_bracket / p).exp())
}
