//! How fast must the group size grow with the horizon to keep the variance
//! bounded? With M(n) = n^p the relative variance stabilizes for p = 1
//! (near 1.12 for the exchange scheme, e^c = 1.2261 for the independent
//! one), decays to 1 for p > 1, and diverges for p < 1.
//!
//! ```bash
//! cargo run --release --example scaling_study
//! ```

use lepf::cli::DEFAULT_T;
use lepf::interaction::SchemeKind;
use lepf::variance::scaling_study;

fn main() -> lepf::Result<()> {
    let exponents = [0.75, 0.90, 1.00, 1.11, 1.33];
    let grid = [10usize, 30, 100, 300, 1_000, 3_000, 10_000];
    println!("scheme,exponent,n,M,value");
    for kind in [SchemeKind::Lepf, SchemeKind::Ibpf] {
        let curves = scaling_study(&exponents, &grid, DEFAULT_T, 1, kind)?;
        for curve in &curves {
            for point in &curve.points {
                println!(
                    "{},{},{},{},{}",
                    kind, curve.exponent, point.n, point.group_size, point.value
                );
            }
        }
    }
    eprintln!(
        "independent-scheme limit at p = 1: exp(e^t - 1) = {:.6}",
        (DEFAULT_T.exp() - 1.0).exp()
    );
    Ok(())
}
