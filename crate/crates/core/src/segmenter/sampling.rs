//! Forward sampling of a full segmentation from backward messages.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::messages::{ChainTables, EmissionTable, Messages};

/// One run of frames `start..=end()` in a single state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub state: usize,
    pub start: usize,
    pub duration: usize,
}

impl Segment {
    /// Last frame covered (inclusive).
    pub fn end(&self) -> usize {
        self.start + self.duration - 1
    }
}

/// Draws an index with probability proportional to `exp(logw)`.
fn sample_log_weights<R: Rng>(rng: &mut R, logw: &[f64]) -> usize {
    let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    debug_assert!(m.is_finite(), "no admissible choice");
    let total: f64 = logw.iter().map(|w| (w - m).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    let mut last_ok = 0;
    for (i, w) in logw.iter().enumerate() {
        let p = (w - m).exp();
        if p > 0.0 {
            last_ok = i;
        }
        if u < p {
            return i;
        }
        u -= p;
    }
    last_ok
}

/// Samples `(state, duration)` pairs front to back from their exact
/// conditionals given the backward messages.
pub fn sample_segments<R: Rng>(
    tables: &ChainTables,
    emis: &EmissionTable,
    msgs: &Messages,
    rng: &mut R,
) -> Vec<Segment> {
    let len = msgs.len;
    let l = tables.num_states;
    let mut segments = Vec::new();
    let mut t = 0;
    let mut prev: Option<usize> = None;
    let mut logw = Vec::with_capacity(l.max(tables.d_max));
    while t < len {
        logw.clear();
        for j in 0..l {
            let prior = match prev {
                None => tables.log_init[j],
                Some(i) => tables.log_trans[i * l + j],
            };
            logw.push(prior + msgs.bstar(t, j));
        }
        let state = sample_log_weights(rng, &logw);

        let dmax = tables.d_max.min(len - t);
        logw.clear();
        for d in 1..=dmax {
            logw.push(tables.log_dur(state, d) + emis.segment(t, d, state) + msgs.b(t + d, state));
        }
        let duration = sample_log_weights(rng, &logw) + 1;
        segments.push(Segment {
            state,
            start: t,
            duration,
        });
        t += duration;
        prev = Some(state);
    }
    segments
}

/// Expands segments into one label per frame.
pub fn labels_from_segments(segments: &[Segment]) -> Vec<usize> {
    segments
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.state, s.duration))
        .collect()
}
