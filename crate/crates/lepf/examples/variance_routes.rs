//! The asymptotic variance of a small finite-state model by every
//! independent route: the reduced-chain evaluation, raw path enumeration,
//! the exact finite-N second moment, and (on an iid toy) the closed form.
//!
//! ```bash
//! cargo run --release --example variance_routes
//! ```

use lepf::hmm::{FiniteHmm, Likelihoods};
use lepf::interaction::{build_alpha, InteractionScheme};
use lepf::variance::{
    centered_second_moment, second_moment_finite_n, sigma2_simple_model, sigma2_theorem1,
    sigma2_theorem1_bruteforce,
};

fn main() -> lepf::Result<()> {
    let model = FiniteHmm::new(
        vec![0.5, 0.5],
        vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        Likelihoods::Homogeneous(vec![1.0, 2.0]),
    )?;
    let phi = [0.0, 1.0];
    let scheme = InteractionScheme::lepf(2, 1)?;

    println!("two-state model, local exchange M = 2, theta = 1:");
    println!("n,reduced_chain,path_enumeration,finite_N_m8");
    for n in 0..=4usize {
        let dp = sigma2_theorem1(&model, &phi, n, scheme)?;
        let bf = sigma2_theorem1_bruteforce(&model, &phi, n, scheme)?;
        let finite = second_moment_finite_n(&model, &phi, n, &build_alpha(scheme, 8)?)?;
        println!("{n},{:.12},{:.12},{:.12}", dp.sigma2, bf.sigma2, finite.normalized);
    }

    let iid = FiniteHmm::iid_toy(vec![0.3, 0.7], vec![0.5, 2.0])?;
    let c = iid.c_constant()?;
    let phi_var = centered_second_moment(iid.initial(), &phi);
    println!("iid toy (c = {c:.4}), same scheme:");
    println!("n,reduced_chain,simplified_closed_form");
    for n in 0..=6usize {
        let general = sigma2_theorem1(&iid, &phi, n, scheme)?;
        let simple = sigma2_simple_model(c, n, scheme, phi_var)?;
        println!("{n},{:.12},{:.12}", general.sigma2, simple.sigma2);
    }
    Ok(())
}
