//! Ground-truth generators: labeled HSMM series for the segmenter and
//! scripted kinematic scenes for the tracker and field stages.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{grid_field, KernelParams, NeighborSet};
use crate::ingest::{rectify_detections, write_detections, Detection, FrameDetections, Homography, Point};
use crate::pipeline::{HomographySection, PipelineConfig};
use crate::segmenter::{ObsSequence, ZeroMeanGaussian};

/// Generative spec for a labeled semi-Markov series with zero-mean
/// Gaussian emissions and shifted-Poisson durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthHsmmSpec {
    /// One `dim x dim` matrix per state, as rows.
    pub covariances: Vec<Vec<Vec<f64>>>,
    /// `d - 1 ~ Poisson(rate)` per state.
    pub dur_rates: Vec<f64>,
    /// Row-stochastic with zero diagonal.
    pub transition: Vec<Vec<f64>>,
    pub t_total: usize,
    pub seed: u64,
}

impl SynthHsmmSpec {
    /// Three states in 26 dimensions: `I`, `4 I`, and an anisotropic
    /// matrix; duration rates 5, 10, 20; uniform switching; 3000 frames.
    pub fn benchmark(seed: u64) -> Self {
        let dim = 26;
        let scaled_identity = |s: f64| -> Vec<Vec<f64>> {
            (0..dim)
                .map(|i| (0..dim).map(|j| if i == j { s } else { 0.0 }).collect())
                .collect()
        };
        Self {
            covariances: vec![scaled_identity(1.0), scaled_identity(4.0), anisotropic(dim)],
            dur_rates: vec![5.0, 10.0, 20.0],
            transition: vec![vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5], vec![0.5, 0.5, 0.0]],
            t_total: 3000,
            seed,
        }
    }

    pub fn num_states(&self) -> usize {
        self.covariances.len()
    }

    pub fn dim(&self) -> usize {
        self.covariances.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.num_states();
        let dim = self.dim();
        if l == 0 || dim == 0 {
            return Err(Error::Config("synthetic spec needs at least one state".into()));
        }
        if self.dur_rates.len() != l || self.transition.len() != l {
            return Err(Error::Config("synthetic spec sizes disagree".into()));
        }
        if self.dur_rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::Config("duration rates must be finite and >= 0".into()));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != l || row.iter().any(|p| *p < 0.0) {
                return Err(Error::Config(format!("transition row {i} invalid")));
            }
            if row[i] != 0.0 {
                return Err(Error::Config("transition diagonal must be zero".into()));
            }
            let s: f64 = row.iter().sum();
            if l > 1 && (s - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("transition row {i} sums to {s}")));
            }
        }
        for c in &self.covariances {
            if c.len() != dim || c.iter().any(|r| r.len() != dim) {
                return Err(Error::Config("covariance dimensions disagree".into()));
            }
            if ZeroMeanGaussian::new(&to_matrix(c)).is_none() {
                return Err(Error::Config("covariance not positive definite".into()));
            }
        }
        Ok(())
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
}

/// Tridiagonal SPD matrix with variances spread geometrically over
/// `[0.2, 8]` and neighbor correlation 0.3.
fn anisotropic(dim: usize) -> Vec<Vec<f64>> {
    let var: Vec<f64> = (0..dim)
        .map(|i| 0.2 * (40.0f64).powf(i as f64 / (dim - 1).max(1) as f64))
        .collect();
    let mut m = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        m[i][i] = var[i];
        if i + 1 < dim {
            let c = 0.3 * (var[i] * var[i + 1]).sqrt();
            m[i][i + 1] = c;
            m[i + 1][i] = c;
        }
    }
    m
}

/// Samples a series from `spec`; returns observations and per-frame
/// labels. The first state is uniform; the last segment is cut at
/// `t_total`.
pub fn generate_hsmm_series(spec: &SynthHsmmSpec) -> Result<(ObsSequence, Vec<usize>)> {
    spec.validate()?;
    let l = spec.num_states();
    let dim = spec.dim();
    let gaussians: Vec<ZeroMeanGaussian> = spec
        .covariances
        .iter()
        .map(|c| ZeroMeanGaussian::new(&to_matrix(c)).expect("validated"))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels = Vec::with_capacity(spec.t_total);
    let mut data = Vec::with_capacity(spec.t_total * dim);
    let mut state = rng.random_range(0..l);
    while labels.len() < spec.t_total {
        let rate = spec.dur_rates[state];
        let extra = if rate > 0.0 {
            Poisson::new(rate).expect("positive rate").sample(&mut rng) as usize
        } else {
            0
        };
        let d = (1 + extra).min(spec.t_total - labels.len());
        for _ in 0..d {
            labels.push(state);
            data.extend(gaussians[state].sample(&mut rng));
        }
        if l > 1 {
            let u: f64 = rng.random();
            let row = &spec.transition[state];
            let mut acc = 0.0;
            let mut next = (state + 1) % l;
            for (j, p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    next = j;
                    break;
                }
            }
            state = next;
        }
    }
    Ok((ObsSequence::new(dim, data)?, labels))
}

/// One scripted agent: enters at `start_frame`, follows the polyline and
/// leaves when it reaches the last waypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentScript {
    pub start_frame: u32,
    pub waypoints: Vec<Point>,
    /// Speed (m/s) per polyline leg; a single value applies to every leg.
    pub speeds: Vec<f64>,
}

impl AgentScript {
    fn speed_on_leg(&self, leg: usize) -> f64 {
        if self.speeds.len() == 1 {
            self.speeds[0]
        } else {
            self.speeds[leg]
        }
    }

    /// Positions at successive frames, `dt` seconds apart. A leg with zero
    /// speed ends the path.
    pub fn positions(&self, dt: f64) -> Vec<Point> {
        let mut out = vec![self.waypoints[0]];
        let mut leg = 0;
        let mut pos = self.waypoints[0];
        let last = self.waypoints.len() - 1;
        'frames: loop {
            let mut budget = dt;
            loop {
                if leg == last {
                    break 'frames;
                }
                let target = self.waypoints[leg + 1];
                let gap = (target[0] - pos[0]).hypot(target[1] - pos[1]);
                if gap == 0.0 {
                    leg += 1;
                    continue;
                }
                let speed = self.speed_on_leg(leg);
                if speed <= 0.0 {
                    break 'frames;
                }
                let reach = speed * budget;
                if reach < gap {
                    let f = reach / gap;
                    pos = [pos[0] + f * (target[0] - pos[0]), pos[1] + f * (target[1] - pos[1])];
                    break;
                }
                budget -= gap / speed;
                pos = target;
                leg += 1;
                if leg == last {
                    // the agent leaves the scene mid-frame
                    if budget <= 1e-12 {
                        out.push(pos);
                    }
                    break 'frames;
                }
            }
            out.push(pos);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub agents: Vec<AgentScript>,
    /// Standard deviation of the isotropic position noise, meters.
    pub noise_std: f64,
    pub frame_rate: f64,
    /// Box extent `(w, h)` attached to every detection.
    pub box_size: (f64, f64),
    pub seed: u64,
    /// Stationary scripts stay this many frames.
    pub hold_frames: u32,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            agents: Vec::new(),
            noise_std: 0.0,
            frame_rate: 10.0,
            box_size: (4.5, 1.8),
            seed: 0,
            hold_frames: 50,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate > 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::Config("frame_rate must be > 0 and noise_std >= 0".into()));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.waypoints.len() < 2 {
                return Err(Error::Config(format!("agent {i}: polyline needs >= 2 points")));
            }
            let legs = a.waypoints.len() - 1;
            if !(a.speeds.len() == 1 || a.speeds.len() == legs) || a.speeds.iter().any(|s| !(*s >= 0.0)) {
                return Err(Error::Config(format!("agent {i}: speeds must be >= 0, one per leg")));
            }
        }
        Ok(())
    }
}

/// Detections with the ground-truth agent index of each one.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub detections: FrameDetections,
    /// Same shape as `detections`.
    pub truth: BTreeMap<u32, Vec<usize>>,
}

impl Scene {
    pub fn num_detections(&self) -> usize {
        self.detections.values().map(Vec::len).sum()
    }
}

/// Renders `spec` into per-frame detections. Agents whose script never
/// moves are held for `hold_frames` frames.
pub fn generate_tracking_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let dt = 1.0 / spec.frame_rate;
    let noise = Normal::new(0.0, spec.noise_std.max(0.0)).expect("finite std");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut scene = Scene::default();
    let paths: Vec<Vec<Point>> = spec
        .agents
        .iter()
        .map(|a| {
            let p = a.positions(dt);
            if p.len() == 1 {
                vec![p[0]; spec.hold_frames.max(1) as usize]
            } else {
                p
            }
        })
        .collect();
    let last = spec
        .agents
        .iter()
        .zip(&paths)
        .map(|(a, p)| a.start_frame + p.len() as u32)
        .max()
        .unwrap_or(0);
    for frame in 0..last {
        for (i, (a, path)) in spec.agents.iter().zip(&paths).enumerate() {
            if frame < a.start_frame {
                continue;
            }
            let Some(&p) = path.get((frame - a.start_frame) as usize) else {
                continue;
            };
            let (nx, ny) = if spec.noise_std > 0.0 {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            scene.detections.entry(frame).or_default().push(Detection {
                frame,
                cx: p[0] + nx,
                cy: p[1] + ny,
                w: spec.box_size.0,
                h: spec.box_size.1,
                score: 0.9,
            });
            scene.truth.entry(frame).or_default().push(i);
        }
    }
    Ok(scene)
}

/// Two agents approaching head-on in adjacent lanes 0.4 m apart at
/// 10 m/s and 10 frames/s, timed so they pass each other between frames.
/// Plain nearest-neighbor matching from last positions swaps them.
pub fn crossing_scene() -> SceneSpec {
    SceneSpec {
        agents: vec![
            AgentScript {
                start_frame: 0,
                waypoints: vec![[-9.5, 0.2], [10.5, 0.2]],
                speeds: vec![10.0],
            },
            AgentScript {
                start_frame: 0,
                waypoints: vec![[9.5, -0.2], [-10.5, -0.2]],
                speeds: vec![10.0],
            },
        ],
        ..Default::default()
    }
}

/// `n` agents on straight or single-turn routes through a 120 m square,
/// staggered entry, speeds 6 to 14 m/s, each in its own lane so that
/// routes never share a lateral offset closer than 3 m.
pub fn random_scene(n: usize, noise_std: f64, seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let half = 60.0;
    let agents = (0..n)
        .map(|i| {
            let lane = -half + 6.0 + 3.5 * i as f64 + rng.random_range(-0.5..0.5);
            let speed = rng.random_range(6.0..14.0);
            let start_frame = rng.random_range(0..60);
            let forward = rng.random::<bool>();
            let (a, b) = if forward { (-half, half) } else { (half, -half) };
            let waypoints = match i % 3 {
                // east-west
                0 => vec![[a, lane], [b, lane]],
                // north-south
                1 => vec![[lane, a], [lane, b]],
                // turn at the lane crossing
                _ => vec![[a, lane], [lane, lane], [lane, b]],
            };
            AgentScript {
                start_frame,
                waypoints,
                speeds: vec![speed],
            }
        })
        .collect();
    SceneSpec {
        agents,
        noise_std,
        seed,
        ..Default::default()
    }
}

/// Velocity fields of random neighborhoods: 1 to 4 neighbors inside the
/// radius with relative velocities drawn around a common flow.
pub fn synthetic_fields(n: usize, k: &KernelParams, radius: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flow = Normal::new(0.0, 3.0).expect("finite");
    let jitter = Normal::new(0.0, 0.5).expect("finite");
    (0..n)
        .map(|_| {
            let common = [flow.sample(&mut rng), flow.sample(&mut rng)];
            let m = rng.random_range(1..=4);
            let mut ns = NeighborSet::default();
            for _ in 0..m {
                let r = radius * rng.random::<f64>().sqrt();
                let th = rng.random_range(0.0..std::f64::consts::TAU);
                ns.push(
                    [r * th.cos(), r * th.sin()],
                    [common[0] + jitter.sample(&mut rng), common[1] + jitter.sample(&mut rng)],
                );
            }
            Ok(grid_field(&ns, k)?.mean)
        })
        .collect()
}

/// Pixel corners of the demo camera and the ground points (meters) they
/// see: a 120 m square viewed at an angle, far edge at the top.
pub fn demo_camera() -> ([Point; 4], [Point; 4]) {
    (
        [[100.0, 1050.0], [1820.0, 1050.0], [1300.0, 150.0], [620.0, 150.0]],
        [[-60.0, -60.0], [60.0, -60.0], [60.0, 60.0], [-60.0, 60.0]],
    )
}

/// Size and budget of a generated end-to-end run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoRun {
    pub agents: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub epochs: usize,
    pub sweeps: usize,
    pub num_states: usize,
}

impl Default for DemoRun {
    fn default() -> Self {
        Self {
            agents: 12,
            noise_std: 0.05,
            seed: 0,
            epochs: 40,
            sweeps: 30,
            num_states: 10,
        }
    }
}

/// Writes `detections.csv` (pixel coordinates, seen through
/// [`demo_camera`]) and `config.toml` into `dir`, returning the config
/// path. Outputs go to `dir/out`.
pub fn write_demo_run(dir: &Path, run: &DemoRun) -> Result<PathBuf> {
    let scene = generate_tracking_scene(&random_scene(run.agents, run.noise_std, run.seed))?;
    let (px, ground) = demo_camera();
    let to_pixels = Homography::from_correspondences(&ground, &px)?;
    let pixels = rectify_detections(&scene.detections, &to_pixels)?;
    let flat: Vec<Detection> = pixels.into_values().flatten().collect();
    std::fs::create_dir_all(dir)?;
    write_detections(BufWriter::new(File::create(dir.join("detections.csv"))?), &flat)?;

    let mut cfg = PipelineConfig {
        seed: run.seed,
        ..Default::default()
    };
    cfg.ingest.homography = Some(HomographySection { src: px, dst: ground });
    cfg.ingest.roi = Some(vec![[-58.0, -58.0], [58.0, -58.0], [58.0, 58.0], [-58.0, 58.0]]);
    cfg.autoencoder.epochs = run.epochs;
    cfg.autoencoder.step_size = 0.01;
    cfg.autoencoder.batch_size = 16;
    cfg.segmenter.iters = run.sweeps;
    cfg.segmenter.num_states = run.num_states;
    cfg.segmenter.d_max = 60;
    cfg.field.min_track_len = 30;
    let text = toml::to_string(&cfg).map_err(|e| Error::Config(e.to_string()))?;
    let path = dir.join("config.toml");
    std::fs::write(&path, text)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_state_series() {
        let spec = SynthHsmmSpec {
            covariances: vec![vec![vec![1.0]]],
            dur_rates: vec![3.0],
            transition: vec![vec![0.0]],
            t_total: 50,
            seed: 1,
        };
        let (obs, labels) = generate_hsmm_series(&spec).unwrap();
        assert_eq!(obs.len(), 50);
        assert!(labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn segment_lengths_match_shifted_poisson_mean() {
        let mut spec = SynthHsmmSpec::benchmark(4);
        spec.t_total = 200_000;
        let (_, labels) = generate_hsmm_series(&spec).unwrap();
        let mut runs: Vec<Vec<f64>> = vec![Vec::new(); 3];
        let mut start = 0;
        for t in 1..=labels.len() {
            if t == labels.len() || labels[t] != labels[start] {
                // drop the final, truncated run
                if t < labels.len() {
                    runs[labels[start]].push((t - start) as f64);
                }
                start = t;
            }
        }
        for (i, r) in runs.iter().enumerate() {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            let expect = 1.0 + spec.dur_rates[i];
            assert!((mean - expect).abs() < 3.0 * se, "state {i}: {mean} vs {expect}");
        }
    }

    #[test]
    fn frame_covariance_matches_spec() {
        let mut spec = SynthHsmmSpec::benchmark(9);
        spec.t_total = 80_000;
        let (obs, labels) = generate_hsmm_series(&spec).unwrap();
        let dim = obs.dim();
        for i in 0..3 {
            let mut s = DMatrix::<f64>::zeros(dim, dim);
            let mut n = 0.0;
            for (t, &l) in labels.iter().enumerate() {
                if l == i {
                    let o = nalgebra::DVector::from_column_slice(obs.frame(t));
                    s += &o * o.transpose();
                    n += 1.0;
                }
            }
            assert!(n >= 10_000.0);
            let est = s / n;
            let truth = to_matrix(&spec.covariances[i]);
            let rel = (&est - &truth).norm() / truth.norm();
            assert!(rel < 0.1, "state {i}: {rel}");
        }
    }

    #[test]
    fn labels_have_no_self_adjacent_segments() {
        // with zero-diagonal transitions, a label change always happens
        // after each segment; equal neighbors can only be inside a run
        let spec = SynthHsmmSpec::benchmark(2);
        let (_, labels) = generate_hsmm_series(&spec).unwrap();
        assert_eq!(labels.len(), 3000);
        assert!(labels.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn static_agent_without_noise_is_constant() {
        let spec = SceneSpec {
            agents: vec![AgentScript {
                start_frame: 0,
                waypoints: vec![[1.0, 2.0], [1.0, 2.0]],
                speeds: vec![0.0],
            }],
            hold_frames: 20,
            ..Default::default()
        };
        let scene = generate_tracking_scene(&spec).unwrap();
        assert_eq!(scene.detections.len(), 20);
        for dets in scene.detections.values() {
            assert_eq!(dets.len(), 1);
            assert_eq!(dets[0].center(), [1.0, 2.0]);
        }
    }

    #[test]
    fn noiseless_detections_lie_on_polyline() {
        let spec = SceneSpec {
            agents: vec![AgentScript {
                start_frame: 3,
                waypoints: vec![[0.0, 0.0], [10.0, 0.0], [10.0, 5.0]],
                speeds: vec![7.0],
            }],
            ..Default::default()
        };
        let scene = generate_tracking_scene(&spec).unwrap();
        assert_eq!(*scene.detections.keys().next().unwrap(), 3);
        for dets in scene.detections.values() {
            let [x, y] = dets[0].center();
            let on_first = y.abs() < 1e-12 && (-1e-12..=10.0 + 1e-12).contains(&x);
            let on_second = (x - 10.0).abs() < 1e-12 && (-1e-12..=5.0 + 1e-12).contains(&y);
            assert!(on_first || on_second, "({x}, {y})");
        }
        // 15 m at 7 m/s and 10 fps: 22 steps plus the start
        assert_eq!(scene.num_detections(), 22);
    }

    #[test]
    fn detections_per_frame_equal_active_agents() {
        let scene = generate_tracking_scene(&random_scene(10, 0.2, 3)).unwrap();
        for (f, dets) in &scene.detections {
            assert_eq!(dets.len(), scene.truth[f].len());
            let mut ids = scene.truth[f].clone();
            ids.dedup();
            assert_eq!(ids.len(), dets.len());
        }
    }

    #[test]
    fn crossing_scene_agents_swap_sides() {
        let scene = generate_tracking_scene(&crossing_scene()).unwrap();
        let first = &scene.detections[&0];
        let last = scene.detections.values().last().unwrap();
        assert_eq!(first.len(), 2);
        assert!(first[0].cx < 0.0 && last[0].cx > 0.0);
        assert!(first[1].cx > 0.0 && last[1].cx < 0.0);
    }

    #[test]
    fn generators_are_pure() {
        let a = generate_tracking_scene(&random_scene(5, 0.3, 8)).unwrap();
        let b = generate_tracking_scene(&random_scene(5, 0.3, 8)).unwrap();
        assert_eq!(a, b);
        let k = KernelParams::INTERSECTION;
        assert_eq!(
            synthetic_fields(3, &k, 10.0, 1).unwrap(),
            synthetic_fields(3, &k, 10.0, 1).unwrap()
        );
    }
}
