//! The oracle-equivalence suite: every exactness, agreement and fluctuation
//! criterion the library is required to satisfy, runnable as the `selftest`
//! subcommand and as the `acceptance` integration test target.
//!
//! Each criterion is self-contained and deterministic given the master
//! seed; statistical checks are calibrated at three standard errors or a
//! 0.001 chi-square level, so they hold across seeds, not just the default.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::collision::{
    chi_square_test, sample_ij_chain, z_mgf, z_pmf_lepf_dp, z_pmf_lepf_mixture, ZLawSpec,
};
use crate::engine::{
    diagnostics_from_group_weights, run_replicates, ParticleEnsemble, ReplicateRunConfig,
    RngStream, StreamPurpose, SubstreamProvider,
};
use crate::hmm::{FiniteHmm, GaussianToy, Likelihoods, StochVol};
use crate::interaction::{build_alpha, InteractionScheme, SchemeKind};
use crate::variance::{
    centered_second_moment, clt_constant, ratio_rn, scaling_study, second_moment_finite_n,
    sigma2_simple_model, sigma2_theorem1, sigma2_theorem1_bruteforce,
};

pub const CRITERIA_COUNT: usize = 14;

/// Default master seed of the suite; any seed is expected to pass.
pub const DEFAULT_SEED: u64 = 20_1855_077;

/// Outcome of one criterion.
#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

const NAMES: [&str; CRITERIA_COUNT] = [
    "gaussian toy constant",
    "independent-scheme mgf closed form",
    "exchange-scheme collision law triple agreement",
    "all-collisions lower bound",
    "limit variance vs path enumeration",
    "limit variance vs simplified closed form",
    "exact finite-N second moment",
    "CLT fluctuation and L_p constants",
    "normalizer unbiasedness",
    "effective-sample-size lower bound",
    "theta sweep peaks at half exchange",
    "scaling anchors",
    "two-point instability example",
    "stochastic volatility qualitative run",
];

/// Run one criterion (1-based id).
pub fn run_criterion(id: usize, seed: u64) -> CriterionOutcome {
    let result = match id {
        1 => c01_gaussian_constant(),
        2 => c02_ibpf_mgf_closed_form(),
        3 => c03_zlaw_triple_agreement(seed),
        4 => c04_crude_lower_bound(),
        5 => c05_theorem1_vs_bruteforce(),
        6 => c06_simplified_specialization(),
        7 => c07_finite_n_second_moment(seed),
        8 => c08_clt_fluctuations(seed),
        9 => c09_unbiasedness(seed),
        10 => c10_ess_bound(seed),
        11 => c11_theta_sweep(),
        12 => c12_scaling_anchors(),
        13 => c13_instability_example(),
        14 => c14_stochastic_volatility(seed),
        _ => Err(format!("unknown criterion id {id}")),
    };
    match result {
        Ok(detail) => CriterionOutcome { id, name: NAMES[id - 1], passed: true, detail },
        Err(detail) => CriterionOutcome { id, name: NAMES[id - 1], passed: false, detail },
    }
}

/// Run the whole suite in order.
pub fn run_all(seed: u64) -> Vec<CriterionOutcome> {
    (1..=CRITERIA_COUNT).map(|id| run_criterion(id, seed)).collect()
}

fn check(ok: bool, message: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message)
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

/// The worked two-state model used throughout the finite-state criteria.
fn two_state() -> FiniteHmm {
    FiniteHmm::new(
        vec![0.5, 0.5],
        vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        Likelihoods::Homogeneous(vec![1.0, 2.0]),
    )
    .expect("valid model")
}

const T0: f64 = 0.1855077028925571; // log(2/sqrt(3)) + 1/24

fn c01_gaussian_constant() -> Result<String, String> {
    let toy = GaussianToy;
    let t0 = toy.log_moment_ratio();
    let closed = (2.0 / 3.0f64.sqrt()).ln() + 1.0 / 24.0;
    check((t0 - 0.1855077).abs() <= 1e-6, format!("t0 = {t0} vs quoted 0.1855077"))?;
    check((t0 - closed).abs() <= 1e-12, format!("t0 = {t0} vs closed form {closed}"))?;

    // Trapezoid quadrature oracle over [-10, 10] with 1e5 points.
    let points = 100_000usize;
    let (a, b) = (-10.0f64, 10.0f64);
    let h = (b - a) / points as f64;
    let phi = |x: f64| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let (mut mean_g, mut mean_g2) = (0.0, 0.0);
    for i in 0..=points {
        let x = a + i as f64 * h;
        let w = if i == 0 || i == points { 0.5 } else { 1.0 };
        let g = toy.g(x);
        mean_g += w * phi(x) * g * h;
        mean_g2 += w * phi(x) * g * g * h;
    }
    let quadrature = (mean_g2 / (mean_g * mean_g)).ln();
    check(
        (t0 - quadrature).abs() <= 1e-8,
        format!("t0 = {t0} vs quadrature {quadrature}"),
    )?;
    Ok(format!("t0 = {t0:.9}, quadrature gap {:.2e}", (t0 - quadrature).abs()))
}

fn c02_ibpf_mgf_closed_form() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for t in [T0, -0.4, 0.9] {
        let c = t.exp() - 1.0;
        for m in [2usize, 20] {
            for n in 0..=200usize {
                let spec = ZLawSpec::new(InteractionScheme::ibpf(m).unwrap(), n);
                let got = z_mgf(&spec, t);
                let want = n as f64 * (1.0 + c / m as f64).ln();
                let rel = (got - want).abs() / want.abs().max(1e-300);
                if n > 0 {
                    worst = worst.max(rel);
                }
                check(
                    n == 0 && got == 0.0 || rel <= 1e-12,
                    format!("t={t}, M={m}, n={n}: {got} vs {want} (rel {rel:.2e})"),
                )?;
            }
        }
    }
    Ok(format!("worst relative gap {worst:.2e} over n <= 200, M in {{2, 20}}"))
}

fn grid_m_theta() -> Vec<(usize, usize)> {
    let mut combos = Vec::new();
    for m in [2usize, 3, 5, 20] {
        for theta in [1, m / 2, m - 1] {
            if theta >= 1 && theta < m && !combos.contains(&(m, theta)) {
                combos.push((m, theta));
            }
        }
    }
    combos
}

fn c03_zlaw_triple_agreement(seed: u64) -> Result<String, String> {
    let mut worst_tv: f64 = 0.0;
    for &(m, theta) in &grid_m_theta() {
        for n in 0..=50usize {
            let dp = z_pmf_lepf_dp(n, m, theta).map_err(|e| e.to_string())?;
            let mixture = z_pmf_lepf_mixture(n, m, theta).map_err(|e| e.to_string())?;
            let tv = dp.total_variation(&mixture);
            worst_tv = worst_tv.max(tv);
            check(tv <= 1e-10, format!("M={m}, theta={theta}, n={n}: tv = {tv:.3e}"))?;
        }
    }

    // Monte Carlo route: 1e6 backward-chain samples at one representative
    // parameter set, chi-square at the 0.001 level against the DP pmf.
    let (m, theta, n) = (3usize, 1usize, 20usize);
    let scheme = InteractionScheme::lepf(m, theta).unwrap();
    let streams = RngStream::new(seed);
    let mut rng = streams.substream(StreamPurpose::Chain, 0, 0, 3);
    let samples = 1_000_000usize;
    let mut counts = vec![0u64; n + 1];
    for _ in 0..samples {
        let z = sample_ij_chain(scheme, n, (0, 0), &mut rng).collisions;
        counts[z as usize] += 1;
    }
    let expected = z_pmf_lepf_dp(n, m, theta).map_err(|e| e.to_string())?;
    let outcome = chi_square_test(&counts, &expected, 0.001);
    check(
        outcome.passed,
        format!(
            "chi-square {:.2} > critical {:.2} at dof {}",
            outcome.statistic, outcome.critical, outcome.dof
        ),
    )?;
    Ok(format!(
        "worst tv {worst_tv:.2e}; chi-square {:.2} <= {:.2} (dof {})",
        outcome.statistic, outcome.critical, outcome.dof
    ))
}

fn c04_crude_lower_bound() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for &(m, theta) in &grid_m_theta() {
        for n in 1..=20usize {
            let expected = (m as f64).powi(-(n as i32));
            for (label, pmf) in [
                ("dp", z_pmf_lepf_dp(n, m, theta).map_err(|e| e.to_string())?),
                ("mixture", z_pmf_lepf_mixture(n, m, theta).map_err(|e| e.to_string())?),
            ] {
                let rel = (pmf.prob(n as i64) - expected).abs() / expected;
                worst = worst.max(rel);
                check(
                    rel <= 1e-12,
                    format!("{label}: M={m}, theta={theta}, n={n}: rel {rel:.2e}"),
                )?;
            }
        }
    }
    Ok(format!("P(Z_n = n) = M^-n to relative {worst:.2e}, n <= 20"))
}

fn c05_theorem1_vs_bruteforce() -> Result<String, String> {
    let model = two_state();
    let phi = [0.0, 1.0];
    let mut worst: f64 = 0.0;
    for m in [2usize, 3] {
        let schemes = [
            InteractionScheme::lepf(m, 1).unwrap(),
            InteractionScheme::ibpf(m).unwrap(),
        ];
        for scheme in schemes {
            for n in 1..=4usize {
                let dp = sigma2_theorem1(&model, &phi, n, scheme).map_err(|e| e.to_string())?;
                let bf = sigma2_theorem1_bruteforce(&model, &phi, n, scheme)
                    .map_err(|e| e.to_string())?;
                let gap = (dp.sigma2 - bf.sigma2).abs() / dp.sigma2.abs().max(1.0);
                worst = worst.max(gap);
                check(
                    gap <= 1e-10,
                    format!("M={m}, {scheme:?}, n={n}: {} vs {}", dp.sigma2, bf.sigma2),
                )?;
            }
        }
    }
    Ok(format!("reduced chain vs path enumeration: worst gap {worst:.2e}"))
}

fn c06_simplified_specialization() -> Result<String, String> {
    let model = FiniteHmm::iid_toy(vec![0.3, 0.7], vec![0.5, 2.0]).map_err(|e| e.to_string())?;
    let phi = [1.0, -0.4];
    let c = model.c_constant().map_err(|e| e.to_string())?;
    let phi_var = centered_second_moment(model.initial(), &phi);
    let mut worst: f64 = 0.0;
    for scheme in [InteractionScheme::lepf(3, 1).unwrap(), InteractionScheme::ibpf(3).unwrap()] {
        for n in 0..=6usize {
            let general = sigma2_theorem1(&model, &phi, n, scheme).map_err(|e| e.to_string())?;
            let simple =
                sigma2_simple_model(c, n, scheme, phi_var).map_err(|e| e.to_string())?;
            let rel = (general.sigma2 - simple.sigma2).abs() / simple.sigma2;
            worst = worst.max(rel);
            check(
                rel <= 1e-8,
                format!("{scheme:?}, n={n}: {} vs {}", general.sigma2, simple.sigma2),
            )?;
        }
    }
    Ok(format!("iid specialization holds to {worst:.2e}, n <= 6"))
}

fn c07_finite_n_second_moment(seed: u64) -> Result<String, String> {
    let model = two_state();
    let phi = [0.0, 1.0];
    let n = 2usize;
    let scheme = InteractionScheme::lepf(2, 1).unwrap();

    // Exact value vs the Monte Carlo mean of the squared centered estimate.
    let alpha = build_alpha(scheme, 2).map_err(|e| e.to_string())?;
    let exact = second_moment_finite_n(&model, &phi, n, &alpha).map_err(|e| e.to_string())?;
    let pi_n = model.prediction_filter(n).map_err(|e| e.to_string())?;
    let phibar: Vec<f64> = crate::variance::centered_against(&phi, &pi_n);
    let streams = RngStream::new(seed);
    let replicates = 100_000u64;
    let mut squares = Vec::with_capacity(replicates as usize);
    for replicate in 0..replicates {
        let mut ensemble = ParticleEnsemble::init(&model, scheme, 2, &streams, replicate);
        for _ in 0..n {
            ensemble.step(&model, &alpha, &streams, replicate);
        }
        let raw: f64 = ensemble
            .positions()
            .iter()
            .zip(ensemble.weights_linear())
            .map(|(&s, &w)| w * phibar[s])
            .sum::<f64>()
            / ensemble.len() as f64;
        squares.push(raw * raw);
    }
    let mc_mean = mean(&squares);
    let se = (sample_variance(&squares) / squares.len() as f64).sqrt();
    check(
        (mc_mean - exact.second_moment).abs() <= 3.0 * se,
        format!(
            "exact {} vs Monte Carlo {mc_mean} (se {se:.3e})",
            exact.second_moment
        ),
    )?;

    // Normalized moment approaches the limit variance as groups grow. At
    // these sizes the approach is exact rather than gradual: far path pairs
    // contribute zero and the per-group sum stops depending on m as soon as
    // no donor window wraps, so the gaps sit at rounding level.
    let limit = sigma2_theorem1(&model, &phi, n, scheme).map_err(|e| e.to_string())?.sigma2;
    let mut gaps = Vec::new();
    for groups in [2usize, 4, 8] {
        let alpha = build_alpha(scheme, groups).map_err(|e| e.to_string())?;
        let result = second_moment_finite_n(&model, &phi, n, &alpha).map_err(|e| e.to_string())?;
        gaps.push((result.normalized - limit).abs() / limit);
    }
    check(
        gaps[2] <= 0.10,
        format!("final gap {:.3} above 10% (gaps {gaps:?})", gaps[2]),
    )?;
    check(gaps[2] <= gaps[0] + 1e-12, format!("gaps not shrinking: {gaps:?}"))?;
    Ok(format!(
        "exact {:.6e} within {:.2} se of Monte Carlo; gaps to limit {:?}",
        exact.second_moment,
        (mc_mean - exact.second_moment).abs() / se,
        gaps.iter().map(|g| format!("{g:.1e}")).collect::<Vec<_>>()
    ))
}

fn c08_clt_fluctuations(seed: u64) -> Result<String, String> {
    let model = two_state();
    let phi = [0.0, 1.0];
    let n = 3usize;
    let (m_size, groups, replicates) = (2usize, 200usize, 10_000usize);
    let truth = {
        let pi = model.prediction_filter(n).map_err(|e| e.to_string())?;
        phi.iter().zip(&pi).map(|(p, q)| p * q).sum::<f64>()
    };
    let mut details = Vec::new();
    for scheme in
        [InteractionScheme::lepf(m_size, 1).unwrap(), InteractionScheme::ibpf(m_size).unwrap()]
    {
        let sigma2 = sigma2_theorem1(&model, &phi, n, scheme).map_err(|e| e.to_string())?.sigma2;
        let config = ReplicateRunConfig {
            scheme,
            group_count: groups,
            horizon: n,
            replicates,
            master_seed: seed,
        };
        let runs = run_replicates(&model, &config, |s| s as f64).map_err(|e| e.to_string())?;
        let errors: Vec<f64> = runs.iter().map(|records| records[n].estimate - truth).collect();

        let n_particles = (m_size * groups) as f64;
        let scaled: Vec<f64> = errors.iter().map(|e| e * n_particles.sqrt()).collect();
        let var = sample_variance(&scaled);
        let var_gap = (var - sigma2).abs() / sigma2;
        check(
            var_gap <= 0.10,
            format!("{scheme:?}: Var = {var:.4} vs sigma2 = {sigma2:.4} ({var_gap:.3})"),
        )?;

        // L1 and L2 moments against the limit constants.
        let sqrt_m = (groups as f64).sqrt();
        for p in [1.0, 2.0] {
            let moment =
                mean(&errors.iter().map(|e| e.abs().powf(p)).collect::<Vec<_>>()).powf(1.0 / p);
            let observed = sqrt_m * moment;
            let constant =
                clt_constant(p, sigma2.sqrt(), m_size).map_err(|e| e.to_string())?;
            let gap = (observed - constant).abs() / constant;
            check(
                gap <= 0.10,
                format!("{scheme:?}: L{p} constant {observed:.4} vs {constant:.4} ({gap:.3})"),
            )?;
        }
        details.push(format!("{:?} var gap {var_gap:.1e}", scheme.kind));
    }
    Ok(details.join("; "))
}

fn c09_unbiasedness(seed: u64) -> Result<String, String> {
    let model = two_state();
    let n = 5usize;
    let exact = model.gamma_normalizer(n).map_err(|e| e.to_string())?;
    let mut details = Vec::new();
    for scheme in [InteractionScheme::lepf(2, 1).unwrap(), InteractionScheme::ibpf(2).unwrap()] {
        let config = ReplicateRunConfig {
            scheme,
            group_count: 2,
            horizon: n,
            replicates: 100_000,
            master_seed: seed,
        };
        let runs = run_replicates(&model, &config, |s| s as f64).map_err(|e| e.to_string())?;
        let values: Vec<f64> =
            runs.iter().map(|records| records[n].log_normalizer.exp()).collect();
        let m = mean(&values);
        let se = (sample_variance(&values) / values.len() as f64).sqrt();
        let sigmas = (m - exact).abs() / se;
        check(
            sigmas <= 3.0,
            format!("{scheme:?}: mean {m} vs exact {exact} is {sigmas:.2} se away"),
        )?;
        details.push(format!("{:?} {sigmas:.2} se", scheme.kind));
    }
    Ok(format!("mean normalizer vs gamma_{n}(1) = {exact:.4}: {}", details.join(", ")))
}

fn c10_ess_bound(seed: u64) -> Result<String, String> {
    // The one-dominant-group fixture attains the bound exactly.
    let fixture = diagnostics_from_group_weights(&[1.0, 0.0, 0.0, 0.0], 5);
    check(fixture.ess_fraction == 0.25, format!("fixture ess {}", fixture.ess_fraction))?;

    // Every record of a degenerate-likelihood run respects the bound (the
    // diagnostics routine additionally asserts it on every call everywhere).
    let model = FiniteHmm::binary_toy(0.25, 0.01).map_err(|e| e.to_string())?;
    let mut checked = 0usize;
    for scheme in [InteractionScheme::lepf(2, 1).unwrap(), InteractionScheme::ibpf(2).unwrap()] {
        let config = ReplicateRunConfig {
            scheme,
            group_count: 8,
            horizon: 50,
            replicates: 20,
            master_seed: seed,
        };
        let runs = run_replicates(&model, &config, |s| s as f64).map_err(|e| e.to_string())?;
        for record in runs.iter().flatten() {
            check(
                record.ess >= 1.0 / 8.0,
                format!("ess {} below 1/m at step {}", record.ess, record.step),
            )?;
            checked += 1;
        }
    }
    Ok(format!("bound attained on fixture; {checked} run records all >= 1/m"))
}

fn c11_theta_sweep() -> Result<String, String> {
    let (m, n) = (20usize, 100usize);
    let at_half = ratio_rn(n, m, 10, T0).map_err(|e| e.to_string())?;
    for theta in 1..m {
        let r = ratio_rn(n, m, theta, T0).map_err(|e| e.to_string())?;
        check(
            at_half >= r,
            format!("R_n(theta=10) = {at_half} < R_n(theta={theta}) = {r}"),
        )?;
    }
    Ok(format!("R_n maximal at theta = M/2 (R = {at_half:.4e})"))
}

fn c12_scaling_anchors() -> Result<String, String> {
    // Independent scheme with M(n) = n converges to exp(e^t0 - 1).
    let limit = (T0.exp() - 1.0).exp();
    let ibpf = scaling_study(&[1.0], &[10_000], T0, 1, SchemeKind::Ibpf)
        .map_err(|e| e.to_string())?;
    let at_1e4 = ibpf[0].points[0].value;
    let gap = (at_1e4 - limit).abs();
    check(
        gap <= 1e-6,
        format!(
            "independent-scheme value {at_1e4:.9} at n = 1e4 vs limit {limit:.9}: \
             gap {gap:.3e} exceeds 1e-6 (the exact deficit is e^c c^2/2n = 2.5e-6 at n = 1e4; \
             the stated tolerance is reachable only for n >= 25500)"
        ),
    )?;

    // Exchange scheme with M(n) = n sits near 1.12 at n = 1e4.
    let lepf = scaling_study(&[1.0], &[10_000], T0, 1, SchemeKind::Lepf)
        .map_err(|e| e.to_string())?;
    let anchor = lepf[0].points[0].value;
    check((1.10..=1.14).contains(&anchor), format!("exchange anchor {anchor} outside [1.10, 1.14]"))?;

    // Exponent above one decays toward 1; exponent below one diverges.
    let decaying = scaling_study(&[1.33], &[10, 100, 1_000, 10_000], T0, 1, SchemeKind::Lepf)
        .map_err(|e| e.to_string())?;
    let values: Vec<f64> = decaying[0].points.iter().map(|p| p.value).collect();
    for pair in values.windows(2) {
        check(pair[1] <= pair[0], format!("exponent 1.33 not decreasing: {values:?}"))?;
    }
    check(
        values[values.len() - 1] >= 1.0 && values[values.len() - 1] <= 1.02,
        format!("exponent 1.33 end value {} not near 1", values[values.len() - 1]),
    )?;

    let diverging = scaling_study(&[0.75], &[100, 1_000, 10_000, 25_000], T0, 1, SchemeKind::Ibpf)
        .map_err(|e| e.to_string())?;
    let values: Vec<f64> = diverging[0].points.iter().map(|p| p.value).collect();
    for pair in values.windows(2) {
        check(pair[1] > pair[0], format!("exponent 0.75 not increasing: {values:?}"))?;
    }
    check(
        values[values.len() - 1] > 10.0,
        format!("exponent 0.75 end value {} has not exceeded 10", values[values.len() - 1]),
    )?;
    Ok("all anchors hit".to_string())
}

fn c13_instability_example() -> Result<String, String> {
    let model = FiniteHmm::binary_toy(0.25, 0.01).map_err(|e| e.to_string())?;
    let c = model.c_constant().map_err(|e| e.to_string())?;
    let growth = (1.0 + c) / 2.0;
    check(growth > 1.0, format!("(1+c)/M = {growth} not above 1"))?;
    let scheme = InteractionScheme::lepf(2, 1).unwrap();
    let mut previous = 0.0;
    for n in 0..=50usize {
        let sigma2 = sigma2_simple_model(c, n, scheme, 1.0).map_err(|e| e.to_string())?.sigma2;
        check(sigma2 > previous, format!("variance not strictly increasing at n = {n}"))?;
        previous = sigma2;
    }
    Ok(format!("(1+c)/M = {growth:.4} > 1; relative variance reaches {previous:.3e} at n = 50"))
}

fn c14_stochastic_volatility(seed: u64) -> Result<String, String> {
    let sv = StochVol::new(0.9, 0.1, 0.5);
    let steps = 20_000usize;
    let streams = RngStream::new(seed);
    let mut obs_rng = streams.substream(StreamPurpose::Observation, 0, 0, 0);
    let (_, observations) = sv.generic().simulate(steps + 1, &mut obs_rng);
    let model = sv.with_observations(observations);

    let (m_size, groups) = (20usize, 50usize);
    let mut medians = Vec::new();
    for scheme in
        [InteractionScheme::lepf(m_size, 1).unwrap(), InteractionScheme::ibpf(m_size).unwrap()]
    {
        let config = ReplicateRunConfig {
            scheme,
            group_count: groups,
            horizon: steps,
            replicates: 1,
            master_seed: seed,
        };
        let runs = run_replicates(&model, &config, |x| x).map_err(|e| e.to_string())?;
        let mut ess: Vec<f64> = runs[0].iter().skip(1).map(|r| r.ess).collect();
        let min = ess.iter().cloned().fold(f64::INFINITY, f64::min);
        check(
            min >= 1.0 / groups as f64,
            format!("{scheme:?}: min ess {min} below 1/m = {}", 1.0 / groups as f64),
        )?;
        medians.push(median(&mut ess));
    }
    let (lepf_median, ibpf_median) = (medians[0], medians[1]);
    check(
        lepf_median > ibpf_median,
        format!("median ess: exchange {lepf_median} not above independent {ibpf_median}"),
    )?;
    Ok(format!(
        "min ess >= 0.02 on both; median ess exchange {lepf_median:.4} > independent {ibpf_median:.4}"
    ))
}

/// Sanity helper for seeds used in examples and the chain sampler: a plain
/// seeded generator detached from the keyed streams.
pub fn plain_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
