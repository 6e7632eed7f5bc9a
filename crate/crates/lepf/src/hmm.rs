//! Hidden Markov model representations and exact finite-state oracles.
//!
//! [`FiniteHmm`] stores an S-state model (initial law, row-stochastic
//! transition matrix, strictly positive likelihood vectors) and computes the
//! quantities every other module is validated against: the prediction
//! filters `pi_n`, the updated filters, and the normalizing constants
//! `gamma_n(1)`. The model zoo mirrors the worked examples used throughout:
//! an iid toy (transition ignores the current state), a Gaussian toy with a
//! closed-form variance constant, a two-point counterexample, and a
//! stochastic volatility model for realistic long runs.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::{Error, Result};

const PROB_TOL: f64 = 1e-12;

/// Likelihood vectors `g_n`: one shared vector, or one per time step up to a
/// fixed horizon set at construction.
#[derive(Debug, Clone)]
pub enum Likelihoods {
    Homogeneous(Vec<f64>),
    TimeVarying(Vec<Vec<f64>>),
}

/// Finite-state hidden Markov model with fixed observations folded into the
/// likelihood vectors.
#[derive(Debug, Clone)]
pub struct FiniteHmm {
    state_count: usize,
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
    likelihoods: Likelihoods,
}

fn validate_probability_vector(v: &[f64], what: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::InvalidModel(format!("{what} is empty")));
    }
    if v.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::InvalidModel(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidModel(format!("{what} sums to {sum}, not 1 within {PROB_TOL}")));
    }
    Ok(v.iter().map(|&x| x / sum).collect())
}

fn validate_likelihood_vector(v: &[f64], state_count: usize, what: &str) -> Result<()> {
    if v.len() != state_count {
        return Err(Error::InvalidModel(format!(
            "{what} has length {}, expected {state_count}",
            v.len()
        )));
    }
    if v.iter().any(|&x| !x.is_finite() || x <= 0.0) {
        return Err(Error::InvalidModel(format!(
            "{what} must be strictly positive and finite everywhere"
        )));
    }
    Ok(())
}

impl FiniteHmm {
    /// Validating constructor. Probability vectors must sum to 1 within
    /// 1e-12 (they are renormalized to machine precision if so, rejected
    /// otherwise) and likelihood entries must be strictly positive.
    pub fn new(
        initial: Vec<f64>,
        transition: Vec<Vec<f64>>,
        likelihoods: Likelihoods,
    ) -> Result<Self> {
        let state_count = initial.len();
        let initial = validate_probability_vector(&initial, "initial distribution")?;
        if transition.len() != state_count {
            return Err(Error::InvalidModel(format!(
                "transition matrix has {} rows, expected {state_count}",
                transition.len()
            )));
        }
        let mut rows = Vec::with_capacity(state_count);
        for (i, row) in transition.iter().enumerate() {
            if row.len() != state_count {
                return Err(Error::InvalidModel(format!(
                    "transition row {i} has {} entries, expected {state_count}",
                    row.len()
                )));
            }
            rows.push(validate_probability_vector(row, &format!("transition row {i}"))?);
        }
        match &likelihoods {
            Likelihoods::Homogeneous(g) => {
                validate_likelihood_vector(g, state_count, "likelihood vector g")?
            }
            Likelihoods::TimeVarying(gs) => {
                if gs.is_empty() {
                    return Err(Error::InvalidModel(
                        "time-varying likelihoods need at least g_0".into(),
                    ));
                }
                for (n, g) in gs.iter().enumerate() {
                    validate_likelihood_vector(g, state_count, &format!("likelihood g_{n}"))?;
                }
            }
        }
        Ok(Self { state_count, initial, transition: rows, likelihoods })
    }

    /// Iid toy: the transition ignores the current state, every row equals
    /// the initial distribution.
    pub fn iid_toy(initial: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        let rows = vec![initial.clone(); initial.len()];
        Self::new(initial, rows, Likelihoods::Homogeneous(g))
    }

    /// Two-point model on {0, 1}: initial law (p, 1-p), likelihood
    /// (1-delta, delta), iid transition. For small delta the ratio
    /// `pi0(g^2)/pi0(g)^2` approaches 1/p, which exceeds any fixed group
    /// size M < 1/p.
    pub fn binary_toy(p: f64, delta: f64) -> Result<Self> {
        if !(0.0 < p && p < 1.0) {
            return Err(Error::InvalidModel(format!("binary toy needs 0 < p < 1, got {p}")));
        }
        if !(0.0 < delta && delta < 1.0) {
            return Err(Error::InvalidModel(format!(
                "binary toy needs 0 < delta < 1, got {delta}"
            )));
        }
        Self::iid_toy(vec![p, 1.0 - p], vec![1.0 - delta, delta])
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition_row(&self, state: usize) -> &[f64] {
        &self.transition[state]
    }

    /// Likelihood vector for step `n`. A homogeneous model serves any step;
    /// a time-varying one rejects steps beyond its stored horizon.
    pub fn likelihood_at(&self, n: usize) -> Result<&[f64]> {
        match &self.likelihoods {
            Likelihoods::Homogeneous(g) => Ok(g),
            Likelihoods::TimeVarying(gs) => gs.get(n).map(|g| g.as_slice()).ok_or(
                Error::HorizonExceeded { requested: n, horizon: gs.len() - 1 },
            ),
        }
    }

    /// True if every transition row equals the initial distribution and the
    /// likelihood is time-homogeneous.
    pub fn is_iid(&self) -> bool {
        matches!(self.likelihoods, Likelihoods::Homogeneous(_))
            && self.transition.iter().all(|row| {
                row.iter().zip(&self.initial).all(|(a, b)| (a - b).abs() <= PROB_TOL)
            })
    }

    /// `c = pi0(g^2)/pi0(g)^2 - 1` for iid-structured models; nonnegative by
    /// Jensen, zero exactly when g is constant.
    pub fn c_constant(&self) -> Result<f64> {
        if !self.is_iid() {
            return Err(Error::InvalidModel(
                "c constant is defined for iid-structured models only".into(),
            ));
        }
        let g = self.likelihood_at(0)?;
        let mean: f64 = self.initial.iter().zip(g).map(|(p, gi)| p * gi).sum();
        let mean_sq: f64 = self.initial.iter().zip(g).map(|(p, gi)| p * gi * gi).sum();
        Ok(mean_sq / (mean * mean) - 1.0)
    }

    /// Prediction filters `pi_0, ..., pi_horizon` by the normalized forward
    /// recursion `pi_n` proportional to `(pi_{n-1} .* g_{n-1}) F`.
    pub fn prediction_filters(&self, horizon: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(horizon + 1);
        out.push(self.initial.clone());
        let mut current = self.initial.clone();
        for n in 1..=horizon {
            let g = self.likelihood_at(n - 1)?;
            let mut next = vec![0.0; self.state_count];
            for (x, row) in self.transition.iter().enumerate() {
                let mass = current[x] * g[x];
                for (y, f) in row.iter().enumerate() {
                    next[y] += mass * f;
                }
            }
            let total: f64 = next.iter().sum();
            if !(total.is_finite() && total > 0.0) {
                return Err(Error::NormalizerUnderflow { step: n });
            }
            for v in &mut next {
                *v /= total;
            }
            current = next.clone();
            out.push(next);
        }
        Ok(out)
    }

    /// Prediction filter at a single step.
    pub fn prediction_filter(&self, n: usize) -> Result<Vec<f64>> {
        Ok(self.prediction_filters(n)?.pop().expect("nonempty by construction"))
    }

    /// `log gamma_n(1)`, accumulated in log space as
    /// `sum over p < n of log pi_p(g_p)`, which survives horizons where the
    /// linear value over- or underflows.
    pub fn log_gamma_normalizer(&self, n: usize) -> Result<f64> {
        let filters = self.prediction_filters(n.saturating_sub(1))?;
        let mut log_gamma = 0.0;
        for (p, pi) in filters.iter().enumerate().take(n) {
            let g = self.likelihood_at(p)?;
            let mean: f64 = pi.iter().zip(g).map(|(pi_x, g_x)| pi_x * g_x).sum();
            log_gamma += mean.ln();
        }
        Ok(log_gamma)
    }

    /// `gamma_n(1)` in linear space; may overflow to infinity for long
    /// horizons, in which case use [`Self::log_gamma_normalizer`].
    pub fn gamma_normalizer(&self, n: usize) -> Result<f64> {
        Ok(self.log_gamma_normalizer(n)?.exp())
    }

    /// Updated filter `pihat_n(x)`, proportional to `pi_n(x) g_n(x)`.
    pub fn updated_filter(&self, n: usize) -> Result<Vec<f64>> {
        let pi = self.prediction_filter(n)?;
        let g = self.likelihood_at(n)?;
        let total: f64 = pi.iter().zip(g).map(|(p, gi)| p * gi).sum();
        assert!(
            total.is_finite() && total > 0.0,
            "updated-filter normalizer must be positive for positive likelihoods"
        );
        Ok(pi.iter().zip(g).map(|(p, gi)| p * gi / total).collect())
    }

    /// Mixing diagnostics: the likelihood ratio bound
    /// `delta = max_n max_{x,y} g_n(x)/g_n(y)` over the stored horizon, and
    /// the smallest `epsilon` with `F(x,.) <= epsilon F(y,.)` elementwise
    /// for every state pair. Both are finite exactly when the transition
    /// matrix is strictly positive.
    pub fn check_mixing(&self) -> MixingReport {
        let g_vectors: Vec<&[f64]> = match &self.likelihoods {
            Likelihoods::Homogeneous(g) => vec![g.as_slice()],
            Likelihoods::TimeVarying(gs) => gs.iter().map(|g| g.as_slice()).collect(),
        };
        let mut delta_ratio: f64 = 1.0;
        for g in g_vectors {
            let max = g.iter().cloned().fold(f64::MIN, f64::max);
            let min = g.iter().cloned().fold(f64::MAX, f64::min);
            delta_ratio = delta_ratio.max(max / min);
        }

        let mut epsilon_ratio: f64 = 1.0;
        let mut witness = None;
        'pairs: for x in 0..self.state_count {
            for y in 0..self.state_count {
                for c in 0..self.state_count {
                    let fx = self.transition[x][c];
                    let fy = self.transition[y][c];
                    if fx > 0.0 && fy == 0.0 {
                        witness = Some((x, y, c));
                        epsilon_ratio = f64::INFINITY;
                        break 'pairs;
                    }
                    if fy > 0.0 {
                        epsilon_ratio = epsilon_ratio.max(fx / fy);
                    }
                }
            }
        }

        MixingReport {
            delta_ratio,
            epsilon_ratio,
            satisfied: delta_ratio.is_finite() && epsilon_ratio.is_finite(),
            witness,
        }
    }

    /// Parse the plain-text model format:
    ///
    /// ```text
    /// # comment
    /// S=2
    /// pi0=0.5,0.5
    /// F.row0=0.9,0.1
    /// F.row1=0.2,0.8
    /// g=1,2        # or g0=..., g1=..., one per step
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut state_count: Option<usize> = None;
        let mut pi0: Option<Vec<f64>> = None;
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut g_hom: Option<Vec<f64>> = None;
        let mut g_steps: Vec<(usize, Vec<f64>)> = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected key=value, got {line:?}", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let parse_floats = |v: &str| -> Result<Vec<f64>> {
                v.split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
                    })
                    .collect()
            };
            if key == "S" {
                state_count = Some(
                    value
                        .parse()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?,
                );
            } else if key == "pi0" {
                pi0 = Some(parse_floats(value)?);
            } else if let Some(idx) = key.strip_prefix("F.row") {
                let idx: usize = idx
                    .parse()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
                rows.push((idx, parse_floats(value)?));
            } else if key == "g" {
                g_hom = Some(parse_floats(value)?);
            } else if let Some(idx) = key.strip_prefix('g') {
                let idx: usize = idx
                    .parse()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
                g_steps.push((idx, parse_floats(value)?));
            } else {
                return Err(Error::Parse(format!("line {}: unknown key {key:?}", lineno + 1)));
            }
        }

        let s = state_count.ok_or_else(|| Error::Parse("missing S=<int>".into()))?;
        let pi0 = pi0.ok_or_else(|| Error::Parse("missing pi0=".into()))?;
        let mut transition = vec![Vec::new(); s];
        let mut seen = vec![false; s];
        for (idx, row) in rows {
            if idx >= s {
                return Err(Error::Parse(format!("F.row{idx} out of range for S={s}")));
            }
            transition[idx] = row;
            seen[idx] = true;
        }
        if let Some(missing) = seen.iter().position(|&b| !b) {
            return Err(Error::Parse(format!("missing F.row{missing}")));
        }
        let likelihoods = match (g_hom, g_steps.is_empty()) {
            (Some(g), true) => Likelihoods::Homogeneous(g),
            (None, false) => {
                let horizon = g_steps.iter().map(|&(i, _)| i).max().unwrap();
                let mut gs = vec![Vec::new(); horizon + 1];
                let mut seen = vec![false; horizon + 1];
                for (idx, g) in g_steps {
                    gs[idx] = g;
                    seen[idx] = true;
                }
                if let Some(missing) = seen.iter().position(|&b| !b) {
                    return Err(Error::Parse(format!("missing g{missing}")));
                }
                Likelihoods::TimeVarying(gs)
            }
            (Some(_), false) => {
                return Err(Error::Parse("give either g= or g<n>= lines, not both".into()))
            }
            (None, true) => return Err(Error::Parse("missing likelihood lines".into())),
        };
        Self::new(pi0, transition, likelihoods)
    }

    /// Load the plain-text model format from a file.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Result of [`FiniteHmm::check_mixing`]. `witness` names a state pair and
/// column where elementwise domination fails.
#[derive(Debug, Clone)]
pub struct MixingReport {
    pub delta_ratio: f64,
    pub epsilon_ratio: f64,
    pub satisfied: bool,
    pub witness: Option<(usize, usize, usize)>,
}

/// State-space model as seen by the particle engine: sample from the initial
/// law, propagate through the transition kernel, and evaluate the strictly
/// positive likelihood `g_n`. A density that underflows to zero for extreme
/// tail states is tolerated by the engine as long as every donor group
/// keeps positive total mass.
pub trait FilterModel: Sync {
    type State: Copy + Send + Sync;
    fn sample_initial(&self, rng: &mut dyn RngCore) -> Self::State;
    fn sample_transition(&self, from: Self::State, rng: &mut dyn RngCore) -> Self::State;
    fn likelihood(&self, step: usize, state: Self::State) -> f64;
}

fn sample_categorical(weights: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

impl FilterModel for FiniteHmm {
    type State = usize;

    fn sample_initial(&self, rng: &mut dyn RngCore) -> usize {
        sample_categorical(&self.initial, rng)
    }

    fn sample_transition(&self, from: usize, rng: &mut dyn RngCore) -> usize {
        sample_categorical(&self.transition[from], rng)
    }

    fn likelihood(&self, step: usize, state: usize) -> f64 {
        self.likelihood_at(step).expect("step beyond stored likelihood horizon")[state]
    }
}

/// Continuous iid toy: standard normal initial law, fresh initial draw at
/// every transition, and the shifted Gaussian likelihood
/// `g(x) = exp(-(x + 1/2)^2 / 2) / sqrt(2 pi)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianToy;

impl GaussianToy {
    /// `log(pi0(g^2)/pi0(g)^2)` in closed form: `log(2/sqrt(3)) + 1/24`,
    /// about 0.1855077. Derived from the Gaussian product integrals
    /// `pi0(g) = exp(-1/16)/sqrt(4 pi)` and
    /// `pi0(g^2) = exp(-1/12)/(2 pi sqrt(3))`.
    pub fn log_moment_ratio(&self) -> f64 {
        (2.0 / 3.0f64.sqrt()).ln() + 1.0 / 24.0
    }

    /// `c = pi0(g^2)/pi0(g)^2 - 1`.
    pub fn c_constant(&self) -> f64 {
        self.log_moment_ratio().exp() - 1.0
    }

    pub fn g(&self, x: f64) -> f64 {
        (-(x + 0.5) * (x + 0.5) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }
}

impl FilterModel for GaussianToy {
    type State = f64;

    fn sample_initial(&self, rng: &mut dyn RngCore) -> f64 {
        rng.sample(StandardNormal)
    }

    fn sample_transition(&self, _from: f64, rng: &mut dyn RngCore) -> f64 {
        rng.sample(StandardNormal)
    }

    fn likelihood(&self, _step: usize, state: f64) -> f64 {
        self.g(state)
    }
}

/// Stochastic volatility model: latent AR(1) log-volatility
/// `X_{k+1} = a X_k + V_k` with `V_k ~ N(0, sigma_v^2)`, `X_0 ~ N(0, 1)`,
/// observed through `Y_k = b exp(X_k / 2) eps_k` with standard normal eps.
#[derive(Debug, Clone, Copy)]
pub struct StochVol {
    pub a: f64,
    pub b: f64,
    pub sigma_v: f64,
}

impl StochVol {
    pub fn new(a: f64, b: f64, sigma_v: f64) -> Self {
        Self { a, b, sigma_v }
    }

    /// Observation density `g(x, y) = N(y; 0, b^2 exp(x))` as a function of
    /// the state.
    pub fn likelihood(&self, y: f64, x: f64) -> f64 {
        let var = self.b * self.b * x.exp();
        (-(y * y) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    /// Wrap as a generic sampling model.
    pub fn generic(&self) -> GenericHmm<f64> {
        let model = *self;
        GenericHmm {
            initial: Box::new(|rng| rng.sample(StandardNormal)),
            transition: Box::new(move |x, rng| {
                let z: f64 = rng.sample(StandardNormal);
                model.a * x + model.sigma_v * z
            }),
            likelihood: Box::new(move |y, x| model.likelihood(y, x)),
            observe: Box::new(move |x, rng| {
                let eps: f64 = rng.sample(StandardNormal);
                model.b * (x / 2.0).exp() * eps
            }),
        }
    }

    /// Bind a fixed observation sequence, yielding a model the particle
    /// engine can filter.
    pub fn with_observations(&self, observations: Vec<f64>) -> ObservedStochVol {
        ObservedStochVol { model: *self, observations }
    }
}

/// Stochastic volatility model with observations fixed, exposing
/// `g_n(x) = g(x, y_n)`.
#[derive(Debug, Clone)]
pub struct ObservedStochVol {
    model: StochVol,
    observations: Vec<f64>,
}

impl ObservedStochVol {
    pub fn horizon(&self) -> usize {
        self.observations.len() - 1
    }
}

impl FilterModel for ObservedStochVol {
    type State = f64;

    fn sample_initial(&self, rng: &mut dyn RngCore) -> f64 {
        rng.sample(StandardNormal)
    }

    fn sample_transition(&self, from: f64, rng: &mut dyn RngCore) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.model.a * from + self.model.sigma_v * z
    }

    fn likelihood(&self, step: usize, state: f64) -> f64 {
        self.model.likelihood(self.observations[step], state)
    }
}

/// Fully generic sampling model built from closures: initial law, transition
/// kernel, observation likelihood `(y, x) -> g(x, y)`, and observation
/// sampler. Used to simulate synthetic data; bind observations to filter.
pub struct GenericHmm<S> {
    pub initial: Box<dyn Fn(&mut dyn RngCore) -> S + Send + Sync>,
    pub transition: Box<dyn Fn(S, &mut dyn RngCore) -> S + Send + Sync>,
    pub likelihood: Box<dyn Fn(f64, S) -> f64 + Send + Sync>,
    pub observe: Box<dyn Fn(S, &mut dyn RngCore) -> f64 + Send + Sync>,
}

impl<S: Copy> GenericHmm<S> {
    /// Simulate `steps` state/observation pairs `(x_0..x_{steps-1},
    /// y_0..y_{steps-1})`. Deterministic given the rng state.
    pub fn simulate(&self, steps: usize, rng: &mut dyn RngCore) -> (Vec<S>, Vec<f64>) {
        assert!(steps >= 1, "simulate needs at least one step");
        let mut states = Vec::with_capacity(steps);
        let mut observations = Vec::with_capacity(steps);
        let mut x = (self.initial)(rng);
        for _ in 0..steps {
            states.push(x);
            observations.push((self.observe)(x, rng));
            x = (self.transition)(x, rng);
        }
        (states, observations)
    }
}

impl<S: Copy + Send + Sync> FilterModel for ObservedGenericHmm<S> {
    type State = S;

    fn sample_initial(&self, rng: &mut dyn RngCore) -> S {
        (self.model.initial)(rng)
    }

    fn sample_transition(&self, from: S, rng: &mut dyn RngCore) -> S {
        (self.model.transition)(from, rng)
    }

    fn likelihood(&self, step: usize, state: S) -> f64 {
        (self.model.likelihood)(self.observations[step], state)
    }
}

/// A [`GenericHmm`] with a fixed observation sequence.
pub struct ObservedGenericHmm<S> {
    pub model: GenericHmm<S>,
    pub observations: Vec<f64>,
}
