//! The backward index chains behind the variance formula: sample the pair
//! chain, compare the empirical collision-count law against the exact
//! dynamic program, and check the reduced (offset, flag) chain reproduces
//! the same law. A start in a different block suppresses collisions.
//!
//! ```bash
//! cargo run --release --example backward_chains
//! ```

use lepf::collision::{
    chi_square_test, de_initial, de_step, sample_ij_chain, z_pmf_lepf_dp, ZLawSpec,
};
use lepf::engine::{RngStream, StreamPurpose, SubstreamProvider};
use lepf::interaction::InteractionScheme;

fn main() -> lepf::Result<()> {
    let (m, theta, n) = (3usize, 1usize, 15usize);
    let scheme = InteractionScheme::lepf(m, theta)?;
    let spec = ZLawSpec::new(scheme, n);
    let streams = RngStream::new(99);
    let mut rng = streams.substream(StreamPurpose::Chain, 0, 0, 0);
    let samples = 200_000usize;

    let mut direct = vec![0u64; n + 1];
    for _ in 0..samples {
        direct[sample_ij_chain(scheme, n, (1, 1), &mut rng).collisions as usize] += 1;
    }
    let mut reduced = vec![0u64; n + 1];
    let mut offset_start = vec![0u64; n + 1];
    for _ in 0..samples {
        let mut state = de_initial(2, 2, m);
        let mut z = 0usize;
        for _ in 0..n {
            state = de_step(&spec, state, &mut rng);
            z += state.e as usize;
        }
        reduced[z] += 1;
        // Start one block apart: the offset walk must first return to zero.
        let mut state = de_initial(2, 5, m);
        let mut z = 0usize;
        for _ in 0..n {
            state = de_step(&spec, state, &mut rng);
            z += state.e as usize;
        }
        offset_start[z] += 1;
    }

    let exact = z_pmf_lepf_dp(n, m, theta)?;
    println!("z,exact,direct_chain,reduced_chain");
    for z in 0..=n {
        println!(
            "{z},{},{},{}",
            exact.prob(z as i64),
            direct[z] as f64 / samples as f64,
            reduced[z] as f64 / samples as f64
        );
    }
    let gof = chi_square_test(&direct, &exact, 0.001);
    eprintln!(
        "chi-square of the direct sampler vs the exact law: {:.2} (critical {:.2}, dof {}) -> {}",
        gof.statistic,
        gof.critical,
        gof.dof,
        if gof.passed { "pass" } else { "fail" }
    );
    let mean_same = exact.mean();
    let mean_offset: f64 = offset_start
        .iter()
        .enumerate()
        .map(|(z, &c)| z as f64 * c as f64 / samples as f64)
        .sum();
    eprintln!(
        "mean collisions: {mean_same:.3} from a common start, {mean_offset:.3} one block apart"
    );
    eprintln!(
        "offset-walk parameters: q_step = {:.4}, q_stay = {:.4}, p_coll = {:.4}",
        spec.q_step(),
        spec.q_stay(),
        spec.p_coll()
    );
    Ok(())
}
