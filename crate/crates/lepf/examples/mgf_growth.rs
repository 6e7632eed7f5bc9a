//! Growth of the collision-count moment generating function, which is the
//! relative asymptotic variance of the simplified model, and the ratio of
//! the two schemes: both grow without bound, the independent scheme faster.
//!
//! ```bash
//! cargo run --release --example mgf_growth
//! ```

use lepf::cli::DEFAULT_T;
use lepf::collision::{z_mgf, ZLawSpec};
use lepf::interaction::InteractionScheme;
use lepf::variance::ratio_rn;

fn main() -> lepf::Result<()> {
    let theta = 1;
    println!("n,M,log_mgf_exchange,log_mgf_independent,ratio");
    for m in [5usize, 10, 20] {
        let lepf = InteractionScheme::lepf(m, theta)?;
        let ibpf = InteractionScheme::ibpf(m)?;
        for n in (0..=200).step_by(10) {
            let le = z_mgf(&ZLawSpec::new(lepf, n), DEFAULT_T);
            let ie = z_mgf(&ZLawSpec::new(ibpf, n), DEFAULT_T);
            let r = ratio_rn(n, m, theta, DEFAULT_T)?;
            println!("{n},{m},{le},{ie},{r}");
        }
    }
    Ok(())
}
