//! Variance ratio of the two schemes as a function of the exchange shift:
//! the advantage of the local exchange scheme peaks at theta = M/2, where
//! half of each group is traded per step.
//!
//! ```bash
//! cargo run --release --example theta_sweep
//! ```

use lepf::cli::DEFAULT_T;
use lepf::variance::ratio_rn;

fn main() -> lepf::Result<()> {
    let (m, n) = (20usize, 100usize);
    println!("theta,ratio");
    let mut best = (0usize, f64::MIN);
    for theta in 1..m {
        let r = ratio_rn(n, m, theta, DEFAULT_T)?;
        if r > best.1 {
            best = (theta, r);
        }
        println!("{theta},{r}");
    }
    eprintln!("maximum ratio {:.4} at theta = {} (M = {m}, n = {n})", best.1, best.0);
    Ok(())
}
