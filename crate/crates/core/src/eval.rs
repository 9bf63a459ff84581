//! Scoring against ground truth.

use std::collections::{BTreeMap, HashMap};

use crate::tracker::{FrameReport, TrackId};

/// Fraction of frames labeled correctly under the best one-to-one
/// mapping between predicted and true labels. Predicted labels left
/// unmapped count as errors.
pub fn best_permutation_accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "label sequences differ in length");
    if pred.is_empty() {
        return 1.0;
    }
    let (pu, tu) = (compact(pred), compact(truth));
    let np = pu.iter().max().map_or(0, |m| m + 1);
    let nt = tu.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; nt]; np];
    for (&p, &t) in pu.iter().zip(&tu) {
        table[p][t] += 1;
    }
    // assignment DP with a bitmask over the smaller side
    let (rows, cols, get): (usize, usize, Box<dyn Fn(usize, usize) -> usize>) = if nt <= np {
        (np, nt, Box::new(|r, c| table[r][c]))
    } else {
        (nt, np, Box::new(|r, c| table[c][r]))
    };
    assert!(cols <= 20, "too many labels on both sides for exact matching");
    let mut best = vec![i64::MIN; 1 << cols];
    best[0] = 0;
    for r in 0..rows {
        let prev = best.clone();
        for mask in 0..(1usize << cols) {
            if prev[mask] == i64::MIN {
                continue;
            }
            for c in 0..cols {
                if mask & (1 << c) == 0 {
                    let m2 = mask | (1 << c);
                    let v = prev[mask] + get(r, c) as i64;
                    if v > best[m2] {
                        best[m2] = v;
                    }
                }
            }
        }
    }
    let hits = best.into_iter().max().unwrap_or(0);
    hits as f64 / pred.len() as f64
}

fn compact(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let n = map.len();
            *map.entry(*l).or_insert(n)
        })
        .collect()
}

/// Number of labels covering at least `fraction` of all frames.
pub fn states_above(labels: &[usize], fraction: f64) -> usize {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for l in labels {
        *counts.entry(*l).or_default() += 1;
    }
    counts
        .values()
        .filter(|&&c| c as f64 >= fraction * labels.len() as f64)
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdSwitchStats {
    pub switches: usize,
    pub detections: usize,
}

impl IdSwitchStats {
    pub fn rate(&self) -> f64 {
        if self.detections == 0 {
            0.0
        } else {
            self.switches as f64 / self.detections as f64
        }
    }
}

/// Counts identity switches: a ground-truth agent whose assigned track id
/// differs from the one it had at its previous detection. `truth` holds
/// the agent of each detection, aligned with the detection indices the
/// reports refer to.
pub fn count_id_switches(reports: &[FrameReport], truth: &BTreeMap<u32, Vec<usize>>) -> IdSwitchStats {
    let mut last: HashMap<usize, TrackId> = HashMap::new();
    let mut stats = IdSwitchStats {
        switches: 0,
        detections: 0,
    };
    for r in reports {
        let Some(agents) = truth.get(&r.frame) else {
            continue;
        };
        for a in &r.assignments {
            let agent = agents[a.det_index];
            stats.detections += 1;
            if let Some(prev) = last.insert(agent, a.track_id) {
                if prev != a.track_id {
                    stats.switches += 1;
                }
            }
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::Assignment;

    #[test]
    fn permutation_invariant() {
        let truth = [0, 0, 1, 1, 2, 2];
        assert_eq!(best_permutation_accuracy(&[5, 5, 3, 3, 9, 9], &truth), 1.0);
        assert_eq!(best_permutation_accuracy(&[1, 1, 1, 1, 1, 1], &truth), 2.0 / 6.0);
    }

    #[test]
    fn extra_predicted_states_cost_accuracy() {
        let truth = [0, 0, 0, 0];
        assert_eq!(best_permutation_accuracy(&[0, 1, 0, 1], &truth), 0.5);
    }

    #[test]
    fn matches_brute_force_on_small_cases() {
        fn brute(pred: &[usize], truth: &[usize]) -> f64 {
            // every injective map from 3 predicted labels into 3 true labels
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            perms
                .iter()
                .map(|p| pred.iter().zip(truth).filter(|(a, b)| p[**a] == **b).count())
                .max()
                .unwrap() as f64
                / pred.len() as f64
        }
        let mut x = 7u64;
        let mut next = || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 33) % 3) as usize
        };
        for _ in 0..50 {
            let pred: Vec<usize> = (0..12).map(|_| next()).collect();
            let truth: Vec<usize> = (0..12).map(|_| next()).collect();
            let a = best_permutation_accuracy(&pred, &truth);
            assert!((a - brute(&pred, &truth)).abs() < 1e-12);
        }
    }

    #[test]
    fn switches_counted_per_agent() {
        let report = |frame, ids: &[u32]| FrameReport {
            frame,
            assignments: ids
                .iter()
                .enumerate()
                .map(|(i, &t)| Assignment {
                    det_index: i,
                    track_id: t,
                    spawned: false,
                })
                .collect(),
            ..Default::default()
        };
        let reports = vec![
            report(0, &[0, 1]),
            report(1, &[0, 1]),
            report(2, &[1, 0]),
            report(3, &[1, 0]),
        ];
        let truth: BTreeMap<u32, Vec<usize>> = (0..4).map(|f| (f, vec![0, 1])).collect();
        let s = count_id_switches(&reports, &truth);
        assert_eq!(s.switches, 2);
        assert_eq!(s.detections, 8);
        assert_eq!(states_above(&[0, 0, 0, 1], 0.25), 2);
    }
}
