//! Nonasymptotic mean-square-error ratio of the two schemes against the
//! analytic variance ratio: as the particle count grows the observed ratio
//! approaches R_n, and the advantage of the exchange scheme compounds with
//! the horizon.
//!
//! ```bash
//! cargo run --release --example mse_ratio
//! ```

use lepf::engine::{run_replicates, ReplicateRunConfig};
use lepf::hmm::FiniteHmm;
use lepf::interaction::InteractionScheme;
use lepf::variance::ratio_rn;

fn main() -> lepf::Result<()> {
    let model = FiniteHmm::binary_toy(0.25, 0.2)?;
    let c = model.c_constant()?;
    let t = c.ln_1p();
    let truth = model.initial()[0];
    let (m_size, theta, horizon, replicates) = (20usize, 1usize, 12usize, 2_000usize);

    println!("n,groups,analytic_ratio,observed_ratio");
    for groups in [5usize, 20, 80] {
        let mut mse = vec![vec![0.0f64; horizon + 1]; 2];
        for (idx, scheme) in
            [InteractionScheme::ibpf(m_size)?, InteractionScheme::lepf(m_size, theta)?]
                .into_iter()
                .enumerate()
        {
            let config = ReplicateRunConfig {
                scheme,
                group_count: groups,
                horizon,
                replicates,
                master_seed: 2718,
            };
            let runs = run_replicates(&model, &config, |s| (s == 0) as u8 as f64)?;
            for records in &runs {
                for (n, record) in records.iter().enumerate() {
                    let e = record.estimate - truth;
                    mse[idx][n] += e * e / replicates as f64;
                }
            }
        }
        for n in (2..=horizon).step_by(2) {
            println!(
                "{n},{groups},{:.4},{:.4}",
                ratio_rn(n, m_size, theta, t)?,
                mse[0][n] / mse[1][n]
            );
        }
    }
    Ok(())
}
