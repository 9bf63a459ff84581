//! Trains the 242-180-121-80-40-24 autoencoder on synthetic velocity
//! fields and reports reconstruction error against the data variance.
//!
//! ```text
//! cargo run --release --example train_autoencoder -- [epochs] [step] [batch]
//! ```

use traffic_primitives::autoenc::{train, MlpSpec, TrainConfig};
use traffic_primitives::field::KernelParams;
use traffic_primitives::synth::synthetic_fields;

fn main() -> traffic_primitives::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let step_size = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let batch_size = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);

    let fields = synthetic_fields(500, &KernelParams::INTERSECTION, 10.0, 7)?;
    let spec = MlpSpec::velocity_field();
    let cfg = TrainConfig {
        step_size,
        epochs,
        batch_size,
        seed: 7,
    };
    let out = train(&spec, &fields, &cfg)?;

    let dim = fields[0].len() as f64;
    let n = fields.len() as f64;
    let mean: Vec<f64> = (0..fields[0].len())
        .map(|j| fields.iter().map(|f| f[j]).sum::<f64>() / n)
        .collect();
    let variance = fields
        .iter()
        .flat_map(|f| f.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)))
        .sum::<f64>()
        / (n * dim);
    let mut mse = 0.0;
    for f in &fields {
        let r = out.model.reconstruct(f)?;
        mse += f.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (n * dim);
    }
    for (e, l) in out.loss_history.iter().enumerate().filter(|(e, _)| e % 25 == 24) {
        println!("epoch {:4}  standardized loss {:.4}", e + 1, l);
    }
    println!(
        "reconstruction mse {:.4}, mean input variance {:.4}, ratio {:.3}",
        mse,
        variance,
        mse / variance
    );
    Ok(())
}
