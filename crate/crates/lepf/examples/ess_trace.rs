//! Effective-sample-size trajectory and its running minimum on a long run:
//! the fraction fluctuates but never drops below 1/m, and larger group
//! counts reach values closer to the bound.
//!
//! ```bash
//! cargo run --release --example ess_trace
//! ```

use lepf::engine::{run_replicates, ReplicateRunConfig};
use lepf::hmm::StochVol;
use lepf::interaction::InteractionScheme;

fn main() -> lepf::Result<()> {
    let sv = StochVol::new(0.9, 0.1, 0.5);
    let steps = 5_000usize;
    use lepf::engine::{RngStream, StreamPurpose, SubstreamProvider};
    let streams = RngStream::new(42);
    let mut rng = streams.substream(StreamPurpose::Observation, 0, 0, 0);
    let (_, observations) = sv.generic().simulate(steps + 1, &mut rng);
    let model = sv.with_observations(observations);

    println!("m,n,ess,running_min");
    for groups in [50usize, 250] {
        let config = ReplicateRunConfig {
            scheme: InteractionScheme::lepf(20, 1)?,
            group_count: groups,
            horizon: steps,
            replicates: 1,
            master_seed: 42,
        };
        let runs = run_replicates(&model, &config, |x| x)?;
        let mut running_min = f64::INFINITY;
        for record in &runs[0] {
            running_min = running_min.min(record.ess);
            if record.step % 50 == 0 {
                println!("{groups},{},{},{running_min}", record.step, record.ess);
            }
        }
        eprintln!(
            "m = {groups}: running minimum {running_min:.5} stayed above 1/m = {:.5}",
            1.0 / groups as f64
        );
    }
    Ok(())
}
