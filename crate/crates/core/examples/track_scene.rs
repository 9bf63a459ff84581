//! Tracks the two-car crossing scene with and without motion prediction,
//! then a noisy ten-agent scene, and counts identity switches.
//!
//! ```text
//! cargo run --example track_scene -- [seed]
//! ```

use traffic_primitives::eval::count_id_switches;
use traffic_primitives::synth::{crossing_scene, generate_tracking_scene, random_scene};
use traffic_primitives::tracker::{track_frames, TrackerConfig};

fn main() -> traffic_primitives::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);

    let crossing = generate_tracking_scene(&crossing_scene())?;
    for use_prediction in [true, false] {
        let cfg = TrackerConfig {
            use_prediction,
            ..Default::default()
        };
        let (tracks, reports) = track_frames(&crossing.detections, &cfg);
        let stats = count_id_switches(&reports, &crossing.truth);
        println!(
            "crossing, prediction {:5}: {} tracks, {} id switches",
            use_prediction,
            tracks.len(),
            stats.switches
        );
    }

    let scene = generate_tracking_scene(&random_scene(10, 0.2, seed))?;
    let (tracks, reports) = track_frames(&scene.detections, &TrackerConfig::default());
    let stats = count_id_switches(&reports, &scene.truth);
    println!(
        "random scene (10 agents, noise 0.2 m): {} detections, {} tracks, {} switches, rate {:.4}",
        stats.detections,
        tracks.len(),
        stats.switches,
        stats.rate()
    );
    Ok(())
}
