//! Command-line driver: dataset generation for the interaction checks,
//! collision laws, variance curves and filter simulations, plus the
//! self-test suite.
//!
//! Flags override config-file keys; the config file is flat `key=value`
//! with `#` comments and the keys named after the long flags. All outputs
//! are newline-terminated CSV with a header row, written to `--out` or
//! stdout. Exit codes: 0 success, 1 validation failure, 2 invariant or
//! check failure during a run.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::collision::{sample_ij_chain, z_mgf, z_pmf_ibpf, z_pmf_lepf_dp, z_pmf_lepf_mixture, PmfTable, ZLawSpec};
use crate::engine::{run_replicates, ParticleEnsemble, ReplicateRunConfig, RngStream, StreamPurpose, SubstreamProvider};
use crate::hmm::{FiniteHmm, GaussianToy, StochVol};
use crate::interaction::{build_alpha, verify_assumptions, AlphaMatrix, InteractionScheme, SchemeKind};
use crate::selftest;
use crate::variance::{
    ratio_rn, scaling_study, sigma2_simple_model, sigma2_theorem1, sigma2_theorem1_bruteforce,
    TestFunction,
};
use crate::{Error, Result};

/// The Gaussian-toy constant `log(2/sqrt(3)) + 1/24`, the default tilt.
pub const DEFAULT_T: f64 = 0.1855077028925571;

#[derive(Parser, Debug)]
#[command(name = "lepf", version, about = "Local exchange and independent-group particle filters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Verify the structural assumptions of an interaction matrix.
    #[command(name = "check-alpha")]
    CheckAlpha(CheckAlphaArgs),
    /// Collision-count pmfs and mgf curves.
    Zlaw(ZlawArgs),
    /// Variance curves, scheme ratios, theta sweeps and scaling studies.
    Variance(VarianceArgs),
    /// Run filter replicates and emit per-step records.
    Simulate(SimulateArgs),
    /// Run the oracle-equivalence suite.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug, Default)]
pub struct CheckAlphaArgs {
    /// Flat key=value config file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scheme: lepf or ibpf.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Group size.
    #[arg(long = "M", visible_alias = "group-size")]
    pub group_size: Option<usize>,
    /// Number of groups.
    #[arg(long = "m", visible_alias = "groups")]
    pub group_count: Option<usize>,
    /// Exchange shift (local exchange scheme only).
    #[arg(long)]
    pub theta: Option<usize>,
    /// Verify a dense matrix loaded from a CSV file instead of a built one.
    #[arg(long)]
    pub matrix_file: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct ZlawArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long = "M")]
    pub group_size: Option<usize>,
    #[arg(long)]
    pub theta: Option<usize>,
    /// Horizon n.
    #[arg(long)]
    pub n: Option<usize>,
    /// pmf method: dp, mixture or mc.
    #[arg(long)]
    pub method: Option<String>,
    /// Curve type: pmf (CSV z,probability) or mgf (CSV n,log_mgf).
    #[arg(long)]
    pub curve: Option<String>,
    /// Tilt for the mgf curve; defaults to the Gaussian-toy constant.
    #[arg(long)]
    pub t: Option<f64>,
    /// Sample budget for the mc method.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct VarianceArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model: gaussian-toy, binary-toy, two-state, or a model-file path.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long = "M")]
    pub group_size: Option<usize>,
    #[arg(long)]
    pub theta: Option<usize>,
    /// Largest horizon of the emitted curve.
    #[arg(long)]
    pub n: Option<usize>,
    /// closed (simplified model), theorem1, or bruteforce.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub t: Option<f64>,
    /// Binary-toy initial mass on state 0.
    #[arg(long)]
    pub p: Option<f64>,
    /// Binary-toy likelihood tilt.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Test function for finite-state methods: identity or indicator:<k>.
    #[arg(long)]
    pub phi: Option<String>,
    /// Emit the scheme ratio curve R_n instead of variances.
    #[arg(long)]
    pub ratio: bool,
    /// Emit R_n against theta at fixed n (the first CSV column holds theta).
    #[arg(long)]
    pub theta_sweep: bool,
    /// Comma-separated exponents for the group-size scaling study.
    #[arg(long)]
    pub scaling: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model: two-state, binary-toy, gaussian-toy, stoch-vol, or a file.
    #[arg(long)]
    pub model: Option<String>,
    /// lepf, ibpf or both.
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long = "M")]
    pub group_size: Option<usize>,
    #[arg(long = "m")]
    pub group_count: Option<usize>,
    #[arg(long)]
    pub theta: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Truth mode: exact or reference-bpf.
    #[arg(long)]
    pub truth: Option<String>,
    /// Reference filter size (>= 10 M m), for reference-bpf truth.
    #[arg(long)]
    pub n_ref: Option<usize>,
    /// Stochastic volatility parameters.
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub sigma_v: Option<f64>,
    /// Binary-toy parameters.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Test function: identity or indicator:<k> (finite models).
    #[arg(long)]
    pub phi: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to write per-step mean-square-error ratio rows (needs both
    /// schemes and a truth mode).
    #[arg(long)]
    pub mse_out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct SelftestArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run a single criterion (1-based).
    #[arg(long)]
    pub only: Option<usize>,
}

/// Run a parsed command, returning the process exit code.
pub fn run(cli: Cli) -> u8 {
    let outcome = match cli.command {
        Command::CheckAlpha(args) => cmd_check_alpha(&args),
        Command::Zlaw(args) => cmd_zlaw(&args),
        Command::Variance(args) => cmd_variance(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Selftest(args) => cmd_selftest(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::NormalizerUnderflow { .. } => 2,
                _ => 1,
            }
        }
    }
}

/// Flat key=value config file with `#` comments.
pub struct ConfigMap(HashMap<String, String>);

impl ConfigMap {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            for (lineno, raw) in std::fs::read_to_string(path)?.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    Error::Parse(format!("config line {}: expected key=value", lineno + 1))
                })?;
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Self(map))
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Parse(format!("config key {key}: cannot parse {raw:?}"))),
        }
    }
}

/// Flag value, else config-file value, else default.
fn resolve<T: std::str::FromStr + Clone>(
    flag: &Option<T>,
    config: &ConfigMap,
    key: &str,
    default: T,
) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v.clone());
    }
    Ok(config.get::<T>(key)?.unwrap_or(default))
}

fn resolve_opt<T: std::str::FromStr + Clone>(
    flag: &Option<T>,
    config: &ConfigMap,
    key: &str,
) -> Result<Option<T>> {
    if let Some(v) = flag {
        return Ok(Some(v.clone()));
    }
    config.get::<T>(key)
}

fn parse_scheme_kind(name: &str) -> Result<SchemeKind> {
    match name {
        "lepf" => Ok(SchemeKind::Lepf),
        "ibpf" => Ok(SchemeKind::Ibpf),
        other => Err(Error::InvalidConfig(format!("unknown scheme {other:?} (lepf|ibpf)"))),
    }
}

fn make_scheme(kind: SchemeKind, group_size: usize, theta: usize) -> Result<InteractionScheme> {
    match kind {
        SchemeKind::Lepf => InteractionScheme::lepf(group_size, theta),
        SchemeKind::Ibpf => InteractionScheme::ibpf(group_size),
    }
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    match out {
        Some(path) => Ok(Box::new(std::io::BufWriter::new(std::fs::File::create(path)?))),
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn load_dense_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (lineno, raw) in std::fs::read_to_string(path)?.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("matrix line {}: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn cmd_check_alpha(args: &CheckAlphaArgs) -> Result<u8> {
    let config = ConfigMap::load(args.config.as_deref())?;
    let kind = parse_scheme_kind(&resolve(&args.scheme, &config, "scheme", "lepf".to_string())?)?;
    let group_size = resolve(&args.group_size, &config, "M", 3)?;
    let group_count = resolve(&args.group_count, &config, "m", 3)?;
    let theta = resolve(&args.theta, &config, "theta", 1)?;
    let scheme = make_scheme(kind, group_size, theta)?;
    let matrix_file = resolve_opt::<PathBuf>(&args.matrix_file, &config, "matrix-file")?;

    let alpha = match &matrix_file {
        Some(path) => AlphaMatrix::from_dense(scheme, &load_dense_matrix(path)?)?,
        None => build_alpha(scheme, group_count)?,
    };
    println!(
        "check-alpha: scheme={} M={} m={} theta={} (N={})",
        kind, group_size, alpha.group_count, scheme.theta, alpha.n
    );
    let report = verify_assumptions(&alpha);
    for (label, status) in report.items() {
        match status {
            crate::interaction::CheckStatus::Pass => println!("  {label:34} PASS"),
            crate::interaction::CheckStatus::VacuousPass => {
                println!("  {label:34} PASS (vacuous: N < 2*beta + 1)")
            }
            crate::interaction::CheckStatus::Fail { witness } => {
                println!("  {label:34} FAIL at {witness}")
            }
        }
    }
    Ok(if report.all_passed() { 0 } else { 1 })
}

fn cmd_zlaw(args: &ZlawArgs) -> Result<u8> {
    let config = ConfigMap::load(args.config.as_deref())?;
    let kind = parse_scheme_kind(&resolve(&args.scheme, &config, "scheme", "lepf".to_string())?)?;
    let group_size = resolve(&args.group_size, &config, "M", 3)?;
    let theta = resolve(&args.theta, &config, "theta", 1)?;
    let n = resolve(&args.n, &config, "n", 20)?;
    let curve = resolve(&args.curve, &config, "curve", "pmf".to_string())?;
    let method = resolve(&args.method, &config, "method", "dp".to_string())?;
    let t = resolve(&args.t, &config, "t", DEFAULT_T)?;
    let samples = resolve(&args.samples, &config, "samples", 100_000)?;
    let seed = resolve(&args.seed, &config, "seed", selftest::DEFAULT_SEED)?;
    let scheme = make_scheme(kind, group_size, theta)?;
    let mut out = open_out(&args.out)?;

    match curve.as_str() {
        "pmf" => {
            let pmf = match (kind, method.as_str()) {
                (SchemeKind::Ibpf, _) => z_pmf_ibpf(n, group_size)?,
                (SchemeKind::Lepf, "dp") => z_pmf_lepf_dp(n, group_size, theta)?,
                (SchemeKind::Lepf, "mixture") => z_pmf_lepf_mixture(n, group_size, theta)?,
                (SchemeKind::Lepf, "mc") => {
                    let streams = RngStream::new(seed);
                    let mut rng = streams.substream(StreamPurpose::Chain, 0, 0, 0);
                    let mut counts = vec![0.0f64; n + 1];
                    for _ in 0..samples {
                        let z = sample_ij_chain(scheme, n, (0, 0), &mut rng).collisions;
                        counts[z as usize] += 1.0;
                    }
                    counts.iter_mut().for_each(|c| *c /= samples as f64);
                    PmfTable::new(0, counts)?
                }
                (_, other) => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown pmf method {other:?} (dp|mixture|mc)"
                    )))
                }
            };
            writeln!(out, "z,probability")?;
            for (z, p) in pmf.iter() {
                writeln!(out, "{z},{p}")?;
            }
        }
        "mgf" => {
            writeln!(out, "n,log_mgf")?;
            for horizon in 0..=n {
                let value = z_mgf(&ZLawSpec::new(scheme, horizon), t);
                writeln!(out, "{horizon},{value}")?;
            }
        }
        other => {
            return Err(Error::InvalidConfig(format!("unknown curve {other:?} (pmf|mgf)")))
        }
    }
    Ok(0)
}

fn parse_phi(spec: &str, state_count: usize) -> Result<TestFunction> {
    if spec == "identity" {
        return Ok(TestFunction::identity(state_count));
    }
    if let Some(state) = spec.strip_prefix("indicator:") {
        let state: usize =
            state.parse().map_err(|e| Error::Parse(format!("phi indicator: {e}")))?;
        if state >= state_count {
            return Err(Error::InvalidConfig(format!(
                "indicator state {state} out of range for {state_count} states"
            )));
        }
        return Ok(TestFunction::indicator(state_count, state));
    }
    Err(Error::InvalidConfig(format!("unknown phi {spec:?} (identity|indicator:<k>)")))
}

fn finite_model(name: &str, p: f64, delta: f64) -> Result<FiniteHmm> {
    match name {
        "two-state" => FiniteHmm::new(
            vec![0.5, 0.5],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            crate::hmm::Likelihoods::Homogeneous(vec![1.0, 2.0]),
        ),
        "binary-toy" => FiniteHmm::binary_toy(p, delta),
        path => FiniteHmm::load(Path::new(path)),
    }
}

fn geometric_grid(n_max: usize) -> Vec<usize> {
    let mut grid = vec![1usize];
    let mut x = 1.0f64;
    while *grid.last().unwrap() < n_max {
        x *= 1.5;
        let next = (x.round() as usize).min(n_max);
        if next > *grid.last().unwrap() {
            grid.push(next);
        }
    }
    grid
}

fn cmd_variance(args: &VarianceArgs) -> Result<u8> {
    let config = ConfigMap::load(args.config.as_deref())?;
    let model_name = resolve(&args.model, &config, "model", "gaussian-toy".to_string())?;
    let kind = parse_scheme_kind(&resolve(&args.scheme, &config, "scheme", "lepf".to_string())?)?;
    let group_size = resolve(&args.group_size, &config, "M", 20)?;
    let theta = resolve(&args.theta, &config, "theta", 1)?;
    let n_max = resolve(&args.n, &config, "n", 100)?;
    let method = resolve(&args.method, &config, "method", "closed".to_string())?;
    let t_flag = resolve_opt::<f64>(&args.t, &config, "t")?;
    let p = resolve(&args.p, &config, "p", 0.25)?;
    let delta = resolve(&args.delta, &config, "delta", 0.01)?;
    let phi_spec = resolve(&args.phi, &config, "phi", "indicator:0".to_string())?;
    let mut out = open_out(&args.out)?;

    writeln!(out, "n,method,sigma2,log_sigma2")?;

    if args.theta_sweep {
        // First column holds theta at fixed horizon n_max.
        let t = t_flag.unwrap_or(DEFAULT_T);
        for theta in 1..group_size {
            let r = ratio_rn(n_max, group_size, theta, t)?;
            writeln!(out, "{theta},ratio_vs_theta,{r},{}", r.ln())?;
        }
        return Ok(0);
    }

    if let Some(spec) = &args.scaling {
        let exponents: Vec<f64> = spec
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("scaling: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let t = t_flag.unwrap_or(DEFAULT_T);
        let grid = geometric_grid(n_max);
        let curves = scaling_study(&exponents, &grid, t, theta, kind)?;
        for curve in &curves {
            if curve.kind == SchemeKind::Lepf && curve.theta_clamped(theta) {
                eprintln!(
                    "warning: exponent {} clamped theta below {theta} at small group sizes",
                    curve.exponent
                );
            }
            for point in &curve.points {
                writeln!(
                    out,
                    "{},scaling_{}_p{},{},{}",
                    point.n,
                    curve.kind,
                    curve.exponent,
                    point.value,
                    point.value.ln()
                )?;
            }
        }
        return Ok(0);
    }

    if args.ratio {
        let t = t_flag.unwrap_or(DEFAULT_T);
        for n in 0..=n_max {
            let r = ratio_rn(n, group_size, theta, t)?;
            writeln!(out, "{n},ratio,{r},{}", r.ln())?;
        }
        return Ok(0);
    }

    match method.as_str() {
        "closed" => {
            // Simplified-model route: c from the model.
            let c = match model_name.as_str() {
                "gaussian-toy" => GaussianToy.c_constant(),
                name => finite_model(name, p, delta)?.c_constant()?,
            };
            let scheme = make_scheme(kind, group_size, theta)?;
            for n in 0..=n_max {
                let r = sigma2_simple_model(c, n, scheme, 1.0)?;
                writeln!(out, "{n},{},{},{}", r.method, r.sigma2, r.sigma2.ln())?;
            }
        }
        "theorem1" | "bruteforce" => {
            let model = finite_model(&model_name, p, delta)?;
            let phi = parse_phi(&phi_spec, model.state_count())?;
            let scheme = make_scheme(kind, group_size, theta)?;
            for n in 0..=n_max {
                let r = if method == "theorem1" {
                    sigma2_theorem1(&model, phi.values(), n, scheme)?
                } else {
                    sigma2_theorem1_bruteforce(&model, phi.values(), n, scheme)?
                };
                writeln!(out, "{n},{},{},{}", r.method, r.sigma2, r.sigma2.ln())?;
            }
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown method {other:?} (closed|theorem1|bruteforce)"
            )))
        }
    }
    Ok(0)
}

enum SimulationModel {
    Finite(FiniteHmm),
    Gaussian(GaussianToy),
    StochVol(crate::hmm::ObservedStochVol),
}

enum TruthMode {
    Exact,
    ReferenceBpf(usize),
    None,
}

struct SchemeRun {
    label: &'static str,
    scheme: InteractionScheme,
    records: Vec<Vec<crate::engine::StepRecord>>,
}

fn cmd_simulate(args: &SimulateArgs) -> Result<u8> {
    let config = ConfigMap::load(args.config.as_deref())?;
    let model_name = resolve(&args.model, &config, "model", "two-state".to_string())?;
    let scheme_spec = resolve(&args.scheme, &config, "scheme", "both".to_string())?;
    let group_size = resolve(&args.group_size, &config, "M", 20)?;
    let group_count = resolve(&args.group_count, &config, "m", 50)?;
    let theta = resolve(&args.theta, &config, "theta", 1)?;
    let horizon = resolve(&args.n, &config, "n", 100)?;
    let replicates = resolve(&args.replicates, &config, "replicates", 1)?;
    let seed = resolve(&args.seed, &config, "seed", selftest::DEFAULT_SEED)?;
    let truth_spec = resolve_opt::<String>(&args.truth, &config, "truth")?;
    let n_ref = resolve(&args.n_ref, &config, "n-ref", 10 * group_size * group_count)?;
    let a = resolve(&args.a, &config, "a", 0.9)?;
    let b = resolve(&args.b, &config, "b", 0.1)?;
    let sigma_v = resolve(&args.sigma_v, &config, "sigma-v", 0.5)?;
    let p = resolve(&args.p, &config, "p", 0.25)?;
    let delta = resolve(&args.delta, &config, "delta", 0.01)?;
    let phi_spec = resolve(&args.phi, &config, "phi", "identity".to_string())?;

    if replicates < 1 {
        return Err(Error::InvalidConfig("replicates must be >= 1".into()));
    }

    let model = match model_name.as_str() {
        "gaussian-toy" => SimulationModel::Gaussian(GaussianToy),
        "stoch-vol" => {
            let sv = StochVol::new(a, b, sigma_v);
            let streams = RngStream::new(seed);
            let mut rng = streams.substream(StreamPurpose::Observation, 0, 0, 0);
            let (_, observations) = sv.generic().simulate(horizon + 1, &mut rng);
            SimulationModel::StochVol(sv.with_observations(observations))
        }
        name => SimulationModel::Finite(finite_model(name, p, delta)?),
    };

    let truth_mode = match truth_spec.as_deref() {
        None => TruthMode::None,
        Some("exact") => {
            if matches!(model, SimulationModel::StochVol(_)) {
                return Err(Error::InvalidConfig(
                    "exact truth is only available for finite-state and iid toy models".into(),
                ));
            }
            TruthMode::Exact
        }
        Some("reference-bpf") => {
            if n_ref < 10 * group_size * group_count {
                return Err(Error::InvalidConfig(format!(
                    "n-ref = {n_ref} must be at least 10 M m = {}",
                    10 * group_size * group_count
                )));
            }
            if matches!(model, SimulationModel::Finite(_)) {
                eprintln!(
                    "warning: reference-bpf truth on a finite-state model; exact truth is \
                     available and cheaper"
                );
            }
            TruthMode::ReferenceBpf(n_ref)
        }
        Some(other) => {
            return Err(Error::InvalidConfig(format!(
                "unknown truth mode {other:?} (exact|reference-bpf)"
            )))
        }
    };

    let schemes: Vec<(&'static str, InteractionScheme)> = match scheme_spec.as_str() {
        "both" => vec![
            ("ibpf", InteractionScheme::ibpf(group_size)?),
            ("lepf", InteractionScheme::lepf(group_size, theta)?),
        ],
        "lepf" => vec![("lepf", InteractionScheme::lepf(group_size, theta)?)],
        "ibpf" => vec![("ibpf", InteractionScheme::ibpf(group_size)?)],
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown scheme {other:?} (lepf|ibpf|both)"
            )))
        }
    };

    // Truth per step, if requested.
    let truth: Option<Vec<f64>> = match (&truth_mode, &model) {
        (TruthMode::None, _) => None,
        (TruthMode::Exact, SimulationModel::Finite(hmm)) => {
            let phi = parse_phi(&phi_spec, hmm.state_count())?;
            let filters = hmm.prediction_filters(horizon)?;
            Some(
                filters
                    .iter()
                    .map(|pi| pi.iter().zip(phi.values()).map(|(p, v)| p * v).sum())
                    .collect(),
            )
        }
        // The Gaussian toy is iid: every prediction filter is the standard
        // normal initial law, whose identity mean is zero.
        (TruthMode::Exact, SimulationModel::Gaussian(_)) => Some(vec![0.0; horizon + 1]),
        (TruthMode::Exact, SimulationModel::StochVol(_)) => unreachable!("rejected above"),
        (TruthMode::ReferenceBpf(n_ref), model) => {
            Some(reference_truth(model, *n_ref, horizon, seed, &phi_spec)?)
        }
    };

    let runs: Vec<SchemeRun> = schemes
        .iter()
        .map(|&(label, scheme)| {
            let config = ReplicateRunConfig {
                scheme,
                group_count,
                horizon,
                replicates,
                master_seed: seed,
            };
            let records = match &model {
                SimulationModel::Finite(hmm) => {
                    let phi = parse_phi(&phi_spec, hmm.state_count())?;
                    let values = phi.values().to_vec();
                    run_replicates(hmm, &config, move |s| values[s])?
                }
                SimulationModel::Gaussian(toy) => run_replicates(toy, &config, |x| x)?,
                SimulationModel::StochVol(sv) => run_replicates(sv, &config, |x| x)?,
            };
            Ok(SchemeRun { label, scheme, records })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = open_out(&args.out)?;
    writeln!(
        out,
        "replicate,n,scheme,M,m,theta,estimate,normalizer_log,ess,neff,max_group_weight,quad_concentration"
    )?;
    for run in &runs {
        for record in run.records.iter().flatten() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                record.replicate,
                record.step,
                run.label,
                run.scheme.group_size,
                group_count,
                run.scheme.theta,
                record.estimate,
                record.log_normalizer,
                record.ess,
                record.n_eff,
                record.max_group_weight,
                record.quad_concentration
            )?;
        }
    }
    drop(out);

    // Mean-square-error ratio rows when both schemes ran against a truth.
    if let (Some(truth), Some(mse_path)) = (&truth, &args.mse_out) {
        if runs.len() == 2 {
            let mse = |run: &SchemeRun, n: usize| -> f64 {
                let total: f64 = run
                    .records
                    .iter()
                    .map(|records| {
                        let e = records[n].estimate - truth[n];
                        e * e
                    })
                    .sum();
                total / run.records.len() as f64
            };
            let mut mse_out = open_out(&Some(mse_path.clone()))?;
            writeln!(mse_out, "n,mse_ibpf,mse_lepf,ratio")?;
            for n in 0..=horizon {
                let mse_ibpf = mse(&runs[0], n);
                let mse_lepf = mse(&runs[1], n);
                writeln!(mse_out, "{n},{mse_ibpf},{mse_lepf},{}", mse_ibpf / mse_lepf)?;
            }
        } else {
            eprintln!("note: --mse-out needs --scheme both; skipping ratio output");
        }
    }
    Ok(0)
}

/// Truth estimates from one large single-group bootstrap filter.
fn reference_truth(
    model: &SimulationModel,
    n_ref: usize,
    horizon: usize,
    seed: u64,
    phi_spec: &str,
) -> Result<Vec<f64>> {
    // A dedicated stream family so the reference run shares nothing with
    // the replicate runs under the same master seed.
    let streams = RngStream::new(seed ^ 0x5452_5554_4850_4646);
    let scheme = InteractionScheme::ibpf(n_ref)?;
    let alpha = build_alpha(scheme, 1)?;
    macro_rules! run_reference {
        ($hmm:expr, $phi:expr) => {{
            let mut ensemble = ParticleEnsemble::init($hmm, scheme, 1, &streams, 0);
            let mut truth = Vec::with_capacity(horizon + 1);
            truth.push(ensemble.estimate_prediction($phi));
            for _ in 0..horizon {
                ensemble.step($hmm, &alpha, &streams, 0);
                truth.push(ensemble.estimate_prediction($phi));
            }
            truth
        }};
    }
    Ok(match model {
        SimulationModel::Finite(hmm) => {
            let phi = parse_phi(phi_spec, hmm.state_count())?;
            let values = phi.values().to_vec();
            run_reference!(hmm, |s: usize| values[s])
        }
        SimulationModel::Gaussian(toy) => run_reference!(toy, |x: f64| x),
        SimulationModel::StochVol(sv) => run_reference!(sv, |x: f64| x),
    })
}

fn cmd_selftest(args: &SelftestArgs) -> Result<u8> {
    let config = ConfigMap::load(args.config.as_deref())?;
    let seed = resolve(&args.seed, &config, "seed", selftest::DEFAULT_SEED)?;
    let only = resolve_opt::<usize>(&args.only, &config, "only")?;

    let outcomes = match only {
        Some(id) => {
            if id == 0 || id > selftest::CRITERIA_COUNT {
                return Err(Error::InvalidConfig(format!(
                    "criterion id must be 1..={}",
                    selftest::CRITERIA_COUNT
                )));
            }
            vec![selftest::run_criterion(id, seed)]
        }
        None => selftest::run_all(seed),
    };
    let mut all_passed = true;
    for outcome in &outcomes {
        let verdict = if outcome.passed { "PASS" } else { "FAIL" };
        println!("criterion {:02} {} {} - {}", outcome.id, verdict, outcome.name, outcome.detail);
        all_passed &= outcome.passed;
    }
    Ok(if all_passed { 0 } else { 2 })
}
