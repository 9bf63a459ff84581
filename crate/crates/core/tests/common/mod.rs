//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use traffic_primitives::autoenc::{loss_and_gradients, MlpParams, MlpSpec};
use traffic_primitives::pipeline::{write_features, FeatureRow, FEATURE_DIM};
use traffic_primitives::segmenter::{ChainTables, Segment};
use traffic_primitives::synth::{generate_hsmm_series, SynthHsmmSpec};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture(name: &str) -> PathBuf {
    repo_root().join("configs/fixtures").join(name)
}

pub fn load_fixture<T: serde::de::DeserializeOwned>(name: &str) -> T {
    let text = std::fs::read_to_string(fixture(name)).expect("fixture readable");
    toml::from_str(&text).expect("fixture parses")
}

/// Squared-exponential kernel written out from its definition.
pub fn se_kernel(a: [f64; 2], b: [f64; 2], amp: f64, lx: f64, ly: f64) -> f64 {
    let dx = (a[0] - b[0]) / lx;
    let dy = (a[1] - b[1]) / ly;
    amp * (-0.5 * (dx * dx + dy * dy)).exp()
}

/// GP posterior by explicit matrix inverse: `(mean_x, mean_y, variance)`.
pub fn dense_gp(
    pos: &[[f64; 2]],
    targets: &[[f64; 2]],
    q: [f64; 2],
    amp: f64,
    lx: f64,
    ly: f64,
    jitter: f64,
) -> (f64, f64, f64) {
    let m = pos.len();
    if m == 0 {
        return (0.0, 0.0, amp);
    }
    let k = DMatrix::from_fn(m, m, |i, j| {
        se_kernel(pos[i], pos[j], amp, lx, ly) + if i == j { jitter } else { 0.0 }
    });
    let kinv = k.try_inverse().expect("invertible");
    let ks = DVector::from_fn(m, |i, _| se_kernel(q, pos[i], amp, lx, ly));
    let tx = DVector::from_fn(m, |i, _| targets[i][0]);
    let ty = DVector::from_fn(m, |i, _| targets[i][1]);
    let w = &kinv * &ks;
    (w.dot(&tx), w.dot(&ty), amp - ks.dot(&w))
}

/// Mean squared reconstruction error of an MLP with tanh hidden layers and
/// identity output, computed directly from the weights.
pub fn mlp_mse(params: &MlpParams, batch: &[Vec<f64>]) -> f64 {
    let n = params.layers.len();
    let mut total = 0.0;
    let mut count = 0;
    for x in batch {
        let mut a = x.clone();
        for (li, l) in params.layers.iter().enumerate() {
            let mut z = l.bias.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                for i in 0..l.inputs {
                    *zo += l.weights[o * l.inputs + i] * a[i];
                }
            }
            a = if li + 1 < n {
                z.iter().map(|v| v.tanh()).collect()
            } else {
                z
            };
        }
        total += a.iter().zip(x).map(|(o, t)| (o - t) * (o - t)).sum::<f64>();
        count += x.len();
    }
    total / count as f64
}

pub fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Every admissible segmentation with its joint log-probability, by brute
/// recursion over (start frame, previous state).
pub fn enumerate_paths(tables: &ChainTables, ll: &dyn Fn(usize, usize) -> f64, len: usize) -> Vec<(Vec<Segment>, f64)> {
    let mut out = Vec::new();
    let mut stack: Vec<(usize, Option<usize>, Vec<Segment>, f64)> = vec![(0, None, Vec::new(), 0.0)];
    let l = tables.num_states;
    while let Some((t, prev, segs, lp)) = stack.pop() {
        if t == len {
            out.push((segs, lp));
            continue;
        }
        for j in 0..l {
            let p0 = match prev {
                None => tables.log_init[j],
                Some(i) if i == j => continue,
                Some(i) => tables.log_trans[i * l + j],
            };
            for d in 1..=tables.d_max.min(len - t) {
                let e: f64 = (t..t + d).map(|u| ll(u, j)).sum();
                let mut s = segs.clone();
                s.push(Segment {
                    state: j,
                    start: t,
                    duration: d,
                });
                stack.push((
                    t + d,
                    Some(j),
                    s,
                    lp + p0 + tables.log_dur[j * tables.d_max + d - 1] + e,
                ));
            }
        }
    }
    out
}

fn normalized_logs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|p| (p / z).ln()).collect()
}

/// Random chain with no self-transitions.
pub fn random_tables(rng: &mut ChaCha8Rng, l: usize, d_max: usize) -> ChainTables {
    let log_init = normalized_logs(rng, l);
    let mut log_trans = vec![f64::NEG_INFINITY; l * l];
    for i in 0..l {
        if l > 1 {
            let row = normalized_logs(rng, l - 1);
            let targets = (0..l).filter(|&j| j != i);
            for (j, v) in targets.zip(row) {
                log_trans[i * l + j] = v;
            }
        }
    }
    let log_dur = (0..l).flat_map(|_| normalized_logs(rng, d_max)).collect();
    ChainTables {
        num_states: l,
        d_max,
        log_init,
        log_trans,
        log_dur,
    }
}

/// Writes the 3-state benchmark series as a feature matrix split into
/// `tracks` equal pieces. Returns the file and the per-track truth labels.
pub fn write_benchmark_features(dir: &Path, seed: u64, tracks: usize) -> (PathBuf, Vec<Vec<usize>>) {
    let mut spec: SynthHsmmSpec = load_fixture("hsmm_benchmark.toml");
    spec.seed = seed;
    let (obs, labels) = generate_hsmm_series(&spec).unwrap();
    assert_eq!(obs.dim(), FEATURE_DIM);
    let per = obs.len() / tracks;
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for k in 0..tracks {
        let range = k * per..(k + 1) * per;
        truth.push(labels[range.clone()].to_vec());
        for (i, t) in range.enumerate() {
            rows.push(FeatureRow {
                track_id: k as u32 + 1,
                frame: 100 + i as u32,
                values: obs.frame(t).to_vec(),
            });
        }
    }
    let path = dir.join("features_injected.csv");
    write_features(std::fs::File::create(&path).unwrap(), &rows).unwrap();
    (path, truth)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_small_net(r: &mut impl Rng) -> MlpParams {
    let input = r.random_range(6..=10);
    let hidden = r.random_range(4..=6).min(input);
    let latent = r.random_range(2..=3);
    let spec = MlpSpec::symmetric(&[input, hidden, latent]).unwrap();
    let mut p = MlpParams::init(&spec, r);
    for l in &mut p.layers {
        for b in &mut l.bias {
            *b = r.random_range(-0.5..0.5);
        }
    }
    p
}

/// Largest relative error of the analytic gradient against central
/// differences of an independently computed loss.
pub fn gradient_check(seed: u64) -> f64 {
    let mut r = rng(seed);
    let params = random_small_net(&mut r);
    let dim = params.spec.input_dim();
    let batch: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..dim).map(|_| r.random_range(-1.5..1.5)).collect())
        .collect();
    let (_, grads) = loss_and_gradients(&params, &batch).unwrap();
    let analytic = grads.flat();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..params.num_params() {
        let mut plus = params.clone();
        let mut minus = params.clone();
        *plus.flat_mut().nth(i).unwrap() += h;
        *minus.flat_mut().nth(i).unwrap() -= h;
        let fd = (mlp_mse(&plus, &batch) - mlp_mse(&minus, &batch)) / (2.0 * h);
        let denom = analytic[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((analytic[i] - fd).abs() / denom);
    }
    worst
}
