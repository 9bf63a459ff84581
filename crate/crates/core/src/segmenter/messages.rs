//! Backward messages of an explicit-duration (semi-Markov) chain.
//!
//! Frames are indexed `0..T`. With `seg(t, d, j)` the log-likelihood of
//! frames `t..t+d` under state `j`:
//!
//! ```text
//! B(T, i)  = 0
//! B*(t, j) = logsumexp_{d=1..min(d_max, T-t)} [ ln p(d | j) + seg(t, d, j) + B(t+d, j) ]
//! B(t, i)  = logsumexp_j [ ln pibar(i, j) + B*(t, j) ]
//! ```
//!
//! `B(t, i)` is the log-probability of frames `t..T` given that a segment
//! in state `i` ended at `t - 1`; `B*(t, j)` given that a segment in state
//! `j` starts at `t`. The last segment must end exactly at frame `T - 1`.

use crate::error::{Error, Result};

use super::dist::logsumexp;
use super::{ModelState, ObsSequence};

/// Log-space quantities every message pass needs, independent of data.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTables {
    pub num_states: usize,
    pub d_max: usize,
    /// `ln` initial-state probabilities.
    pub log_init: Vec<f64>,
    /// Row-major `ln pibar`; diagonal entries are `-inf`.
    pub log_trans: Vec<f64>,
    /// Row-major `num_states x d_max`; column `k` is duration `k + 1`.
    pub log_dur: Vec<f64>,
}

impl ChainTables {
    pub fn from_state(state: &ModelState, d_max: usize) -> Self {
        let l = state.num_states();
        let log_trans = state
            .trans_ns
            .iter()
            .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
            .collect();
        let mut log_dur = Vec::with_capacity(l * d_max);
        for &rate in &state.dur_rates {
            log_dur.extend(super::dist::truncated_duration_table(rate, d_max));
        }
        Self {
            num_states: l,
            d_max,
            log_init: state.beta.iter().map(|p| p.ln()).collect(),
            log_trans,
            log_dur,
        }
    }

    #[inline]
    pub fn log_dur(&self, state: usize, d: usize) -> f64 {
        self.log_dur[state * self.d_max + d - 1]
    }
}

/// Per-frame emission log-likelihoods stored as prefix sums so any
/// segment's likelihood is one subtraction. Impossible frames are counted
/// separately so they never enter the sums.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionTable {
    num_states: usize,
    /// `(T + 1) x L`, row `t` = sum over finite frames `< t`.
    cum: Vec<f64>,
    /// `(T + 1) x L`, row `t` = number of impossible frames `< t`.
    dead: Vec<u32>,
}

impl EmissionTable {
    pub fn new(seq: &ObsSequence, state: &ModelState) -> Result<Self> {
        let gaussians = state.emission_densities()?;
        Ok(Self::from_fn(seq.len(), gaussians.len(), |t, j| {
            gaussians[j].ln_pdf(seq.frame(t))
        }))
    }

    /// Builds the table from an arbitrary per-frame log-likelihood.
    pub fn from_fn(len: usize, num_states: usize, mut ll: impl FnMut(usize, usize) -> f64) -> Self {
        let mut cum = vec![0.0; (len + 1) * num_states];
        let mut dead = vec![0u32; (len + 1) * num_states];
        for t in 0..len {
            for j in 0..num_states {
                let v = ll(t, j);
                let (a, b) = (t * num_states + j, (t + 1) * num_states + j);
                if v.is_finite() {
                    cum[b] = cum[a] + v;
                    dead[b] = dead[a];
                } else {
                    cum[b] = cum[a];
                    dead[b] = dead[a] + 1;
                }
            }
        }
        Self { num_states, cum, dead }
    }

    pub fn len(&self) -> usize {
        self.cum.len() / self.num_states - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Log-likelihood of frames `start..start + d` under `state`.
    #[inline]
    pub fn segment(&self, start: usize, d: usize, state: usize) -> f64 {
        let (a, b) = (start * self.num_states + state, (start + d) * self.num_states + state);
        if self.dead[b] != self.dead[a] {
            return f64::NEG_INFINITY;
        }
        self.cum[b] - self.cum[a]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Messages {
    pub len: usize,
    pub num_states: usize,
    /// `(T + 1) x L`
    pub b: Vec<f64>,
    /// `T x L`
    pub bstar: Vec<f64>,
    pub log_marginal: f64,
}

impl Messages {
    #[inline]
    pub fn b(&self, t: usize, i: usize) -> f64 {
        self.b[t * self.num_states + i]
    }

    #[inline]
    pub fn bstar(&self, t: usize, j: usize) -> f64 {
        self.bstar[t * self.num_states + j]
    }
}

/// Computes `B` and `B*` for one sequence.
pub fn backward_messages(tables: &ChainTables, emis: &EmissionTable) -> Result<Messages> {
    let len = emis.len();
    let l = tables.num_states;
    if len == 0 {
        return Err(Error::InvalidInput("empty observation sequence".into()));
    }
    if tables.d_max == 0 {
        return Err(Error::Config("d_max must be >= 1".into()));
    }
    let mut b = vec![f64::NEG_INFINITY; (len + 1) * l];
    let mut bstar = vec![f64::NEG_INFINITY; len * l];
    b[len * l..].iter_mut().for_each(|v| *v = 0.0);

    let mut terms = Vec::with_capacity(tables.d_max.max(l));
    for t in (0..len).rev() {
        let dmax = tables.d_max.min(len - t);
        for j in 0..l {
            terms.clear();
            for d in 1..=dmax {
                let next = b[(t + d) * l + j];
                if next == f64::NEG_INFINITY {
                    continue;
                }
                terms.push(tables.log_dur(j, d) + emis.segment(t, d, j) + next);
            }
            bstar[t * l + j] = logsumexp(&terms);
        }
        for i in 0..l {
            terms.clear();
            for j in 0..l {
                let lt = tables.log_trans[i * l + j];
                if lt > f64::NEG_INFINITY {
                    terms.push(lt + bstar[t * l + j]);
                }
            }
            b[t * l + i] = logsumexp(&terms);
        }
    }

    let init_terms: Vec<f64> = (0..l).map(|j| tables.log_init[j] + bstar[j]).collect();
    let log_marginal = logsumexp(&init_terms);
    if !log_marginal.is_finite() {
        // report the latest frame from which no continuation is possible
        let frame = (0..len)
            .rev()
            .find(|&t| bstar[t * l..(t + 1) * l].iter().all(|v| *v == f64::NEG_INFINITY))
            .unwrap_or(0);
        return Err(Error::ZeroLikelihood {
            frame,
            sweep: None,
            sequence: None,
        });
    }
    Ok(Messages {
        len,
        num_states: l,
        b,
        bstar,
        log_marginal,
    })
}
