//! Fits the weak-limit HDP-HSMM to the 3-state synthetic benchmark and
//! scores the recovered segmentation.
//!
//! ```text
//! cargo run --release --example segment_synthetic -- [seed] [sweeps]
//! ```

use std::time::Instant;

use traffic_primitives::eval::{best_permutation_accuracy, states_above};
use traffic_primitives::segmenter::{fit_with, HdpHsmmConfig};
use traffic_primitives::synth::{generate_hsmm_series, SynthHsmmSpec};

fn main() -> traffic_primitives::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let sweeps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);

    let (obs, truth) = generate_hsmm_series(&SynthHsmmSpec::benchmark(seed))?;
    let cfg = HdpHsmmConfig {
        num_states: 20,
        iters: sweeps,
        seed,
        ..Default::default()
    };
    let start = Instant::now();
    let fit = fit_with(&[obs], &cfg, |s, summary| {
        if summary.sweep % 25 == 0 {
            let labels = s.state().labels(0);
            println!(
                "sweep {:4}  log joint {:12.1}  used {:2}  accuracy {:.3}",
                summary.sweep,
                summary.log_joint,
                summary.used_states,
                best_permutation_accuracy(&labels, &truth)
            );
        }
        Ok(())
    })?;
    let labels = fit.state.labels(0);
    println!(
        "seed {seed}: accuracy {:.3}, states >= 5% of frames: {}, alpha {:.2}, gamma {:.2}, {:.1}s",
        best_permutation_accuracy(&labels, &truth),
        states_above(&labels, 0.05),
        fit.state.alpha,
        fit.state.gamma,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
