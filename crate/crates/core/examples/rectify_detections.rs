//! Maps pixel detections onto the ground plane: solves the homography
//! from four correspondences, filters a frame with a ground-plane region
//! of interest, and prints pixel and metric coordinates side by side.
//!
//! ```text
//! cargo run --example rectify_detections
//! ```

use traffic_primitives::ingest::{
    filter_detections, group_by_frame, rectify_detections, Detection, FilterConfig, Homography, RoiPolygon,
};
use traffic_primitives::synth::demo_camera;

fn main() -> traffic_primitives::Result<()> {
    let (px, ground) = demo_camera();
    let h = Homography::from_correspondences(&px, &ground)?;
    for (p, g) in px.iter().zip(&ground) {
        let m = h.apply(*p)?;
        println!(
            "pixel ({:6.1}, {:6.1}) -> ({:7.3}, {:7.3}) m, expected ({}, {})",
            p[0], p[1], m[0], m[1], g[0], g[1]
        );
    }

    let det = |cx, cy, score| Detection {
        frame: 0,
        cx,
        cy,
        w: 60.0,
        h: 30.0,
        score,
    };
    let frame = group_by_frame(&[
        det(960.0, 600.0, 0.9),
        det(965.0, 602.0, 0.6),   // duplicate of the first box
        det(700.0, 300.0, 0.1),   // low score
        det(1850.0, 1070.0, 0.8), // outside the region of interest
    ]);
    let roi = RoiPolygon::new(vec![[-50.0, -50.0], [50.0, -50.0], [50.0, 50.0], [-50.0, 50.0]])?;
    let roi_px = roi.transformed(&h.inverse()?)?;
    let outcome = filter_detections(&frame, &FilterConfig::default(), Some(&roi_px), 1920.0 * 1080.0);
    for (d, why) in &outcome.removed {
        println!("removed ({:.0}, {:.0}): {why:?}", d.cx, d.cy);
    }
    for (d, g) in outcome.kept[&0].iter().zip(&rectify_detections(&outcome.kept, &h)?[&0]) {
        println!(
            "kept ({:.0}, {:.0}) px -> ({:.2}, {:.2}) m, footprint {:.2} x {:.2} m",
            d.cx, d.cy, g.cx, g.cy, g.w, g.h
        );
    }
    Ok(())
}
