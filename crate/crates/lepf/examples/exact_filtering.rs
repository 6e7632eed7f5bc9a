//! Exact finite-state oracles: prediction filters, normalizing constants,
//! updated filters, the iid variance constant, and mixing diagnostics.
//!
//! ```bash
//! cargo run --release --example exact_filtering
//! ```

use lepf::hmm::{FiniteHmm, GaussianToy};

fn main() -> lepf::Result<()> {
    let model = FiniteHmm::parse(
        "S=2\npi0=0.5,0.5\nF.row0=0.9,0.1\nF.row1=0.2,0.8\ng=1,2\n",
    )?;

    println!("n,pi_n(0),pi_n(1),pihat_n(0),gamma_n(1)");
    for (n, pi) in model.prediction_filters(8)?.iter().enumerate() {
        let pihat = model.updated_filter(n)?;
        let gamma = model.gamma_normalizer(n)?;
        println!("{n},{:.10},{:.10},{:.10},{:.10}", pi[0], pi[1], pihat[0], gamma);
    }

    let mixing = model.check_mixing();
    println!(
        "mixing: likelihood ratio {:.3}, transition domination {:.3}, satisfied = {}",
        mixing.delta_ratio, mixing.epsilon_ratio, mixing.satisfied
    );

    // Iid toys expose the variance constant c = pi0(g^2)/pi0(g)^2 - 1.
    let binary = FiniteHmm::binary_toy(0.25, 0.01)?;
    println!("binary toy c = {:.6} (1 + c = {:.4})", binary.c_constant()?, binary.c_constant()? + 1.0);
    let toy = GaussianToy;
    println!(
        "gaussian toy: log moment ratio = {:.9}, c = {:.9}",
        toy.log_moment_ratio(),
        toy.c_constant()
    );
    Ok(())
}
