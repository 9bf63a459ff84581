//! Builds the relative velocity field around one ego vehicle from two
//! neighbors, prints it as a coarse arrow map, and writes the quiver plot
//! used by the report stage.
//!
//! ```text
//! cargo run --example velocity_field -- [out.svg]
//! ```

use traffic_primitives::field::{grid_field, to_ego_frame, KernelParams, GRID_SIDE};
use traffic_primitives::pipeline::render_field_svg;
use traffic_primitives::tracker::TrackSample;

fn arrow(v: [f64; 2]) -> char {
    if v[0].hypot(v[1]) < 0.25 {
        return '.';
    }
    let a = v[1].atan2(v[0]).to_degrees();
    match ((a + 360.0 + 22.5) % 360.0 / 45.0) as usize {
        0 => '>',
        1 => '/',
        2 => '^',
        3 => '\\',
        4 => '<',
        5 => '/',
        6 => 'v',
        _ => '\\',
    }
}

fn main() -> traffic_primitives::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "velocity_field.svg".into());
    let sample = |x, y, vx, vy| TrackSample {
        frame: 0,
        position: [x, y],
        velocity: [vx, vy],
        acceleration: [0.0, 0.0],
    };
    // ego heading north at 8 m/s; a faster car ahead, an oncoming car on the left
    let ego = sample(0.0, 0.0, 0.0, 8.0);
    let others = [
        sample(0.5, 7.0, 0.0, 11.0),
        sample(-3.5, 2.0, 0.0, -9.0),
        sample(30.0, 0.0, 5.0, 0.0),
    ];
    let ns = to_ego_frame(&ego, std::f64::consts::FRAC_PI_2, &others, 10.0);
    println!("{} neighbors inside 10 m (ego frame: x forward, y left)", ns.len());
    for (p, d) in ns.positions.iter().zip(&ns.derivatives) {
        println!(
            "  at ({:5.2}, {:5.2}) relative velocity ({:6.2}, {:6.2})",
            p[0], p[1], d[0], d[1]
        );
    }

    let field = grid_field(&ns, &KernelParams::INTERSECTION)?;
    // top row is +y (left of the ego)
    for iy in (0..GRID_SIDE).rev() {
        let row: String = (0..GRID_SIDE)
            .map(|ix| {
                if ix == 5 && iy == 5 {
                    'E'
                } else {
                    arrow(field.mean_at(ix, iy))
                }
            })
            .flat_map(|c| [c, ' '])
            .collect();
        println!("  {row}");
    }
    std::fs::write(&out, render_field_svg(&field.mean, "relative velocity field"))?;
    println!("wrote {out}");
    Ok(())
}
