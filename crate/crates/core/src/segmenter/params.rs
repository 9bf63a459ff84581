//! Prior draws and conjugate posterior updates for the HDP-HSMM.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::Result;

use super::dist::{beta as beta_draw, crp_tables, dirichlet, gamma, inverse_wishart, negative_binomial};
use super::{
    no_self_transitions, sample_all_segments, stream_rng, HdpHsmmConfig, ModelState, ObsSequence, Segment,
    TransitionCounts,
};

/// Counts gathered from the current segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentStatistics {
    /// Frames per state.
    pub frames: Vec<usize>,
    /// Per-state scatter matrix `sum o o^T`.
    pub scatter: Vec<DMatrix<f64>>,
    /// Segments per state.
    pub segments: Vec<u64>,
    /// Per-state sum of `d - 1` over its segments.
    pub excess_duration: Vec<u64>,
    /// `L x L` segment-to-segment transitions (zero diagonal).
    pub transitions: Vec<u64>,
    /// First-segment states.
    pub init: Vec<u64>,
}

pub fn segment_statistics(data: &[ObsSequence], segments: &[Vec<Segment>], num_states: usize) -> SegmentStatistics {
    let l = num_states;
    let dim = data[0].dim();
    let mut st = SegmentStatistics {
        frames: vec![0; l],
        scatter: vec![DMatrix::zeros(dim, dim); l],
        segments: vec![0; l],
        excess_duration: vec![0; l],
        transitions: vec![0; l * l],
        init: vec![0; l],
    };
    for (seq, segs) in data.iter().zip(segments) {
        for (k, s) in segs.iter().enumerate() {
            if k == 0 {
                st.init[s.state] += 1;
            } else {
                st.transitions[segs[k - 1].state * l + s.state] += 1;
            }
            st.segments[s.state] += 1;
            st.excess_duration[s.state] += (s.duration - 1) as u64;
            st.frames[s.state] += s.duration;
            let scatter = &mut st.scatter[s.state];
            for t in s.start..s.start + s.duration {
                let o = seq.frame(t);
                for i in 0..dim {
                    let oi = o[i];
                    for j in 0..=i {
                        scatter[(i, j)] += oi * o[j];
                    }
                }
            }
        }
    }
    for s in &mut st.scatter {
        for i in 0..dim {
            for j in 0..i {
                s[(j, i)] = s[(i, j)];
            }
        }
    }
    st
}

/// Draws parameters from the prior, then labels every sequence by one
/// blocked draw under those parameters.
pub fn init_state(data: &[ObsSequence], cfg: &HdpHsmmConfig, scale: &DMatrix<f64>) -> Result<ModelState> {
    let l = cfg.num_states;
    let mut rng = stream_rng(cfg.seed, 0, 0);
    let beta = dirichlet(&mut rng, &vec![cfg.gamma / l as f64; l]);
    let mut trans = Vec::with_capacity(l * l);
    for _ in 0..l {
        let conc: Vec<f64> = beta.iter().map(|b| cfg.alpha * b).collect();
        trans.extend(dirichlet(&mut rng, &conc));
    }
    let covariances = (0..l)
        .map(|_| inverse_wishart(&mut rng, cfg.iw_df, scale))
        .collect::<Result<Vec<_>>>()?;
    let dur_rates = (0..l).map(|_| gamma(&mut rng, cfg.dur_shape, cfg.dur_rate)).collect();
    let mut state = ModelState {
        alpha: cfg.alpha,
        gamma: cfg.gamma,
        trans_ns: no_self_transitions(&trans, l),
        beta,
        trans,
        covariances,
        dur_rates,
        segments: Vec::new(),
        counts: TransitionCounts::default(),
    };
    state.segments = sample_all_segments(data, &state, cfg, 0)?;
    Ok(state)
}

/// Conjugate updates given the current segmentation.
///
/// * covariances: `IW(df + n_i, scale + sum o o^T)` (means fixed at zero)
/// * duration rates: `Gamma(k0 + sum (d - 1), theta0 + m_i)`
/// * `beta`, `pi`: weak-limit update. Self-transitions rejected by `pibar`
///   are restored as negative-binomial counts, table counts are drawn from
///   the Chinese-restaurant representation, then
///   `beta ~ Dir(gamma / L + tables + init)` and
///   `pi_i ~ Dir(alpha beta + counts_i)`.
pub fn resample_parameters<R: Rng>(
    data: &[ObsSequence],
    state: &mut ModelState,
    cfg: &HdpHsmmConfig,
    scale: &DMatrix<f64>,
    rng: &mut R,
) -> Result<()> {
    let l = state.num_states();
    let st = segment_statistics(data, &state.segments, l);

    for i in 0..l {
        let df = cfg.iw_df + st.frames[i] as f64;
        let s = scale + &st.scatter[i];
        state.covariances[i] = inverse_wishart(rng, df, &s)?;
        state.dur_rates[i] = gamma(
            rng,
            cfg.dur_shape + st.excess_duration[i] as f64,
            cfg.dur_rate + st.segments[i] as f64,
        )
        .max(1e-300);
    }

    let mut augmented = st.transitions.clone();
    for i in 0..l {
        let out: u64 = st.transitions[i * l..(i + 1) * l].iter().sum();
        let stay = state.trans[i * l + i];
        augmented[i * l + i] = negative_binomial(rng, out, 1.0 - stay);
    }
    let mut tables = vec![0u64; l * l];
    for i in 0..l {
        for j in 0..l {
            tables[i * l + j] = crp_tables(rng, augmented[i * l + j], state.alpha * state.beta[j]);
        }
    }
    let top: Vec<f64> = (0..l)
        .map(|j| {
            let m: u64 = (0..l).map(|i| tables[i * l + j]).sum();
            state.gamma / l as f64 + (m + st.init[j]) as f64
        })
        .collect();
    state.beta = dirichlet(rng, &top);
    for i in 0..l {
        let conc: Vec<f64> = (0..l)
            .map(|j| state.alpha * state.beta[j] + augmented[i * l + j] as f64)
            .collect();
        let row = dirichlet(rng, &conc);
        state.trans[i * l..(i + 1) * l].copy_from_slice(&row);
    }
    state.trans_ns = no_self_transitions(&state.trans, l);
    state.counts = TransitionCounts {
        augmented,
        tables,
        init: st.init,
    };
    Ok(())
}

/// Auxiliary-variable updates for the concentrations given the table
/// counts from the last parameter update. Returns the inputs unchanged
/// when resampling is disabled.
pub fn resample_hyperparameters<R: Rng>(state: &ModelState, cfg: &HdpHsmmConfig, rng: &mut R) -> (f64, f64) {
    if !cfg.resample_hypers {
        return (state.alpha, state.gamma);
    }
    let l = state.num_states();
    let counts = &state.counts;
    if counts.tables.len() != l * l {
        return (state.alpha, state.gamma);
    }

    // alpha: one restaurant per source state
    let customers: Vec<u64> = (0..l)
        .map(|i| counts.augmented[i * l..(i + 1) * l].iter().sum())
        .filter(|&n| n > 0)
        .collect();
    let total_tables: u64 = counts.tables.iter().sum();
    let (a_shape, a_rate) = cfg.alpha_prior;
    let mut alpha = state.alpha;
    for _ in 0..20 {
        let mut log_w = 0.0;
        let mut s = 0u64;
        for &n in &customers {
            let nf = n as f64;
            log_w += beta_draw(rng, alpha + 1.0, nf).max(f64::MIN_POSITIVE).ln();
            if rng.random::<f64>() < nf / (nf + alpha) {
                s += 1;
            }
        }
        alpha = gamma(rng, a_shape + total_tables as f64 - s as f64, a_rate - log_w).max(1e-12);
    }

    // gamma: top-level restaurant whose customers are the tables
    let dish_tables: Vec<u64> = (0..l)
        .map(|j| (0..l).map(|i| counts.tables[i * l + j]).sum::<u64>() + counts.init.get(j).copied().unwrap_or(0))
        .collect();
    let m: u64 = dish_tables.iter().sum();
    let k = dish_tables.iter().filter(|&&c| c > 0).count() as f64;
    let (g_shape, g_rate) = cfg.gamma_prior;
    let mut gam = state.gamma;
    if m > 0 {
        for _ in 0..20 {
            let eta = beta_draw(rng, gam + 1.0, m as f64).max(f64::MIN_POSITIVE);
            let rate = g_rate - eta.ln();
            let odds = (g_shape + k - 1.0) / (m as f64 * rate);
            let pick_upper = rng.random::<f64>() < odds / (1.0 + odds);
            let shape = if pick_upper { g_shape + k } else { g_shape + k - 1.0 };
            gam = gamma(rng, shape.max(1e-12), rate).max(1e-12);
        }
    } else {
        gam = gamma(rng, g_shape, g_rate).max(1e-12);
    }
    (alpha, gam)
}
