//! Empirical check of the central limit theorem: the variance of the scaled
//! estimation error over replicates converges to the exact asymptotic
//! variance, and the scaled L1/L2 error moments converge to the Gaussian
//! limit constants.
//!
//! ```bash
//! cargo run --release --example clt_fluctuations
//! ```

use lepf::engine::{run_replicates, ReplicateRunConfig};
use lepf::hmm::{FiniteHmm, Likelihoods};
use lepf::interaction::InteractionScheme;
use lepf::variance::{clt_constant, sigma2_theorem1};

fn main() -> lepf::Result<()> {
    let model = FiniteHmm::new(
        vec![0.5, 0.5],
        vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        Likelihoods::Homogeneous(vec![1.0, 2.0]),
    )?;
    let phi = [0.0, 1.0];
    let n = 3usize;
    let (m_size, groups, replicates) = (2usize, 100usize, 4_000usize);
    let truth: f64 =
        model.prediction_filter(n)?.iter().zip(&phi).map(|(p, v)| p * v).sum();

    println!("scheme,sigma2_exact,var_empirical,L1_limit,L1_empirical,L2_limit,L2_empirical");
    for scheme in [InteractionScheme::lepf(m_size, 1)?, InteractionScheme::ibpf(m_size)?] {
        let sigma2 = sigma2_theorem1(&model, &phi, n, scheme)?.sigma2;
        let config = ReplicateRunConfig {
            scheme,
            group_count: groups,
            horizon: n,
            replicates,
            master_seed: 7,
        };
        let runs = run_replicates(&model, &config, |s| s as f64)?;
        let errors: Vec<f64> = runs.iter().map(|r| r[n].estimate - truth).collect();
        let big_n = (m_size * groups) as f64;
        let var = errors.iter().map(|e| e * e * big_n).sum::<f64>() / (replicates - 1) as f64;
        let sqrt_m = (groups as f64).sqrt();
        let l1 = sqrt_m * errors.iter().map(|e| e.abs()).sum::<f64>() / replicates as f64;
        let l2 = sqrt_m
            * (errors.iter().map(|e| e * e).sum::<f64>() / replicates as f64).sqrt();
        println!(
            "{},{sigma2:.5},{var:.5},{:.5},{l1:.5},{:.5},{l2:.5}",
            scheme.kind,
            clt_constant(1.0, sigma2.sqrt(), m_size)?,
            clt_constant(2.0, sigma2.sqrt(), m_size)?,
        );
    }
    Ok(())
}
