//! Weak-limit HDP-HSMM segmentation of multivariate time series.
//!
//! Emissions are zero-mean Gaussians with inverse-Wishart priors on their
//! covariances; durations are shifted Poisson (`d - 1 ~ Poisson(omega)`)
//! with gamma priors on the rates, truncated to `[1, d_max]`; transitions
//! between segments follow `pibar`, the transition matrix with its
//! diagonal removed and rows renormalized. The first segment's state is
//! drawn from the top-level weights `beta`.
//!
//! Inference is blocked Gibbs sampling: backward messages, a forward draw
//! of the whole segmentation per sequence, then conjugate parameter
//! updates and, optionally, the DP concentrations.

mod checkpoint;
mod dist;
mod messages;
mod params;
mod sampling;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use dist::{
    dirichlet, inverse_wishart, inverse_wishart_ln_pdf, logsumexp, shifted_poisson_ln_pmf, truncated_duration_table,
    ZeroMeanGaussian,
};
pub use messages::{backward_messages, ChainTables, EmissionTable, Messages};
pub use params::{init_state, resample_hyperparameters, resample_parameters, segment_statistics, SegmentStatistics};
pub use sampling::{labels_from_segments, sample_segments, Segment};

/// One observation sequence, `len x dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsSequence {
    dim: usize,
    data: Vec<f64>,
}

impl ObsSequence {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(
                "observation sequence needs at least one frame of positive dimension".into(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite observation".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<S: AsRef<[f64]>>(rows: &[S]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != dim) {
            return Err(Error::InvalidInput("ragged observation rows".into()));
        }
        Self::new(dim, rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Subtracts the pooled per-dimension mean from every sequence and returns
/// the means removed.
pub fn center_sequences(data: &[ObsSequence]) -> (Vec<ObsSequence>, Vec<f64>) {
    let dim = data[0].dim;
    let mut mean = vec![0.0; dim];
    let mut n = 0usize;
    for seq in data {
        for f in seq.frames() {
            for (m, v) in mean.iter_mut().zip(f) {
                *m += v;
            }
            n += 1;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = data
        .iter()
        .map(|seq| ObsSequence {
            dim,
            data: seq.data.iter().enumerate().map(|(k, v)| v - mean[k % dim]).collect(),
        })
        .collect();
    (centered, mean)
}

/// Inverse-Wishart scale matrix choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IwScale {
    /// `(df - dim - 1) * v * I` where `v` is the mean per-dimension
    /// variance of the centered data, so the prior mean covariance is `v I`.
    #[default]
    Auto,
    /// `value * I`.
    Isotropic { value: f64 },
    /// Full matrix, row by row.
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HdpHsmmConfig {
    /// Weak-limit truncation level `L`.
    pub num_states: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub resample_hypers: bool,
    /// Gamma(shape, rate) hyperprior on `alpha`.
    pub alpha_prior: (f64, f64),
    /// Gamma(shape, rate) hyperprior on `gamma`.
    pub gamma_prior: (f64, f64),
    pub iw_df: f64,
    pub iw_scale: IwScale,
    /// Gamma(shape, rate) prior on the Poisson duration rates.
    pub dur_shape: f64,
    pub dur_rate: f64,
    pub d_max: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for HdpHsmmConfig {
    fn default() -> Self {
        Self {
            num_states: 20,
            alpha: 1.0,
            gamma: 1.0,
            resample_hypers: true,
            alpha_prior: (1.0, 1.0),
            gamma_prior: (1.0, 1.0),
            iw_df: 30.0,
            iw_scale: IwScale::Auto,
            dur_shape: 2.0,
            dur_rate: 0.1,
            d_max: 200,
            iters: 1000,
            seed: 0,
        }
    }
}

impl HdpHsmmConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.num_states < 2 {
            return Err(Error::Config("num_states must be >= 2".into()));
        }
        if !(self.alpha > 0.0 && self.gamma > 0.0) {
            return Err(Error::Config("alpha and gamma must be > 0".into()));
        }
        let (aa, ab) = self.alpha_prior;
        let (ga, gb) = self.gamma_prior;
        if !(aa > 0.0 && ab > 0.0 && ga > 0.0 && gb > 0.0) {
            return Err(Error::Config("hyperprior parameters must be > 0".into()));
        }
        if !(self.iw_df > dim as f64 + 1.0) {
            return Err(Error::Config(format!("iw_df must exceed dim + 1 = {}", dim + 1)));
        }
        if !(self.dur_shape > 0.0 && self.dur_rate > 0.0) {
            return Err(Error::Config("duration prior parameters must be > 0".into()));
        }
        if self.d_max == 0 {
            return Err(Error::Config("d_max must be >= 1".into()));
        }
        Ok(())
    }

    /// Resolves the inverse-Wishart scale for centered `data`.
    pub fn resolve_scale(&self, data: &[ObsSequence]) -> Result<DMatrix<f64>> {
        let dim = data[0].dim();
        let m = match &self.iw_scale {
            IwScale::Auto => {
                let mut ss = 0.0;
                let mut n = 0usize;
                for seq in data {
                    ss += seq.data.iter().map(|v| v * v).sum::<f64>();
                    n += seq.len();
                }
                let v = (ss / (n * dim) as f64).max(1e-12);
                DMatrix::identity(dim, dim) * ((self.iw_df - dim as f64 - 1.0) * v)
            }
            IwScale::Isotropic { value } => DMatrix::identity(dim, dim) * *value,
            IwScale::Matrix { rows } => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::Config(format!("iw_scale must be {dim} x {dim}")));
                }
                DMatrix::from_fn(dim, dim, |i, j| rows[i][j])
            }
        };
        let symmetric =
            (0..dim).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * (1.0 + m[(i, j)].abs())));
        if !symmetric || nalgebra::Cholesky::new(m.clone()).is_none() {
            return Err(Error::Config("iw_scale must be symmetric positive definite".into()));
        }
        Ok(m)
    }
}

/// Sufficient bookkeeping from the last parameter update, used by the
/// concentration resampler.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransitionCounts {
    /// `L x L` segment transition counts with sampled self-transitions on
    /// the diagonal.
    pub augmented: Vec<u64>,
    /// `L x L` auxiliary table counts.
    pub tables: Vec<u64>,
    /// First-segment state counts.
    pub init: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub alpha: f64,
    pub gamma: f64,
    /// Top-level weights; also the initial-state distribution.
    pub beta: Vec<f64>,
    /// Row-major `L x L` transition matrix.
    pub trans: Vec<f64>,
    /// `trans` with zero diagonal and renormalized rows.
    pub trans_ns: Vec<f64>,
    pub covariances: Vec<DMatrix<f64>>,
    pub dur_rates: Vec<f64>,
    /// Current segmentation, one list per sequence.
    pub segments: Vec<Vec<Segment>>,
    pub counts: TransitionCounts,
}

/// `pi` with the diagonal removed and each row renormalized over its
/// off-diagonal mass.
pub fn no_self_transitions(trans: &[f64], l: usize) -> Vec<f64> {
    let mut out = vec![0.0; l * l];
    for i in 0..l {
        let row = &trans[i * l..(i + 1) * l];
        let off: f64 = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, p)| p).sum();
        if off > 0.0 {
            for j in 0..l {
                if j != i {
                    out[i * l + j] = row[j] / off;
                }
            }
        }
    }
    out
}

impl ModelState {
    pub fn num_states(&self) -> usize {
        self.beta.len()
    }

    pub fn dim(&self) -> usize {
        self.covariances.first().map_or(0, |c| c.nrows())
    }

    pub fn emission_densities(&self) -> Result<Vec<ZeroMeanGaussian>> {
        self.covariances
            .iter()
            .enumerate()
            .map(|(i, c)| {
                ZeroMeanGaussian::new(c)
                    .ok_or_else(|| Error::InvalidInput(format!("covariance {i} is not positive definite")))
            })
            .collect()
    }

    pub fn labels(&self, seq: usize) -> Vec<usize> {
        labels_from_segments(&self.segments[seq])
    }

    /// Frames assigned to each state across all sequences.
    pub fn state_frame_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_states()];
        for s in self.segments.iter().flatten() {
            c[s.state] += s.duration;
        }
        c
    }

    pub fn used_states(&self) -> usize {
        self.state_frame_counts().iter().filter(|&&c| c > 0).count()
    }

    /// Checks the structural invariants of the state against sequence
    /// lengths; returns a description of the first violation.
    pub fn check_invariants(&self, seq_lens: &[usize]) -> std::result::Result<(), String> {
        let l = self.num_states();
        if (self.beta.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err("beta does not sum to 1".into());
        }
        for i in 0..l {
            let row: f64 = self.trans[i * l..(i + 1) * l].iter().sum();
            if (row - 1.0).abs() > 1e-12 {
                return Err(format!("trans row {i} sums to {row}"));
            }
            let row_ns: f64 = self.trans_ns[i * l..(i + 1) * l].iter().sum();
            if (row_ns - 1.0).abs() > 1e-12 {
                return Err(format!("no-self-transition row {i} sums to {row_ns}"));
            }
            if self.trans_ns[i * l + i] != 0.0 {
                return Err(format!("no-self-transition diagonal {i} is nonzero"));
            }
        }
        for (i, c) in self.covariances.iter().enumerate() {
            if nalgebra::Cholesky::new(c.clone()).is_none() {
                return Err(format!("covariance {i} is not SPD"));
            }
        }
        if self.dur_rates.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err("non-positive duration rate".into());
        }
        if self.segments.len() != seq_lens.len() {
            return Err("segment list count differs from sequence count".into());
        }
        for (q, (segs, &len)) in self.segments.iter().zip(seq_lens).enumerate() {
            let mut t = 0;
            for (k, s) in segs.iter().enumerate() {
                if s.duration == 0 {
                    return Err(format!("sequence {q}: zero-length segment"));
                }
                if s.start != t {
                    return Err(format!("sequence {q}: segment {k} starts at {} not {t}", s.start));
                }
                if s.state >= l {
                    return Err(format!("sequence {q}: state out of range"));
                }
                if k > 0 && segs[k - 1].state == s.state {
                    return Err(format!("sequence {q}: self-adjacent segments at {k}"));
                }
                t += s.duration;
            }
            if t != len {
                return Err(format!("sequence {q}: durations sum to {t}, expected {len}"));
            }
        }
        Ok(())
    }
}

/// Deterministic generator for `(seed, sweep, stream)`; stream 0 drives
/// parameter updates, stream `q + 1` drives sequence `q`.
pub fn stream_rng(seed: u64, sweep: usize, stream: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((sweep as u64) << 32) | stream as u64);
    rng
}

/// Log joint of data, segmentation, emission covariances and duration
/// rates under the current state (Dirichlet terms for `beta` and `pi` are
/// left out).
pub fn log_joint(data: &[ObsSequence], state: &ModelState, cfg: &HdpHsmmConfig, scale: &DMatrix<f64>) -> Result<f64> {
    let l = state.num_states();
    let gaussians = state.emission_densities()?;
    let dur: Vec<Vec<f64>> = state
        .dur_rates
        .iter()
        .map(|&w| truncated_duration_table(w, cfg.d_max))
        .collect();
    let mut total = 0.0;
    for (seq, segs) in data.iter().zip(&state.segments) {
        for (k, s) in segs.iter().enumerate() {
            total += if k == 0 {
                state.beta[s.state].ln()
            } else {
                state.trans_ns[segs[k - 1].state * l + s.state].ln()
            };
            total += dur[s.state][s.duration - 1];
            for t in s.start..s.start + s.duration {
                total += gaussians[s.state].ln_pdf(seq.frame(t));
            }
        }
    }
    for c in &state.covariances {
        total += inverse_wishart_ln_pdf(c, cfg.iw_df, scale)
            .ok_or_else(|| Error::InvalidInput("covariance lost positive definiteness".into()))?;
    }
    for &w in &state.dur_rates {
        total += dist::gamma_ln_pdf(w, cfg.dur_shape, cfg.dur_rate);
    }
    Ok(total)
}

/// Per-sequence list of `(start, end, primitive)` with inclusive ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSegmentation {
    pub sequences: Vec<Vec<(usize, usize, usize)>>,
    pub primitives_used: usize,
}

impl PrimitiveSegmentation {
    pub fn from_state(state: &ModelState) -> Self {
        Self {
            sequences: state
                .segments
                .iter()
                .map(|segs| segs.iter().map(|s| (s.start, s.end(), s.state)).collect())
                .collect(),
            primitives_used: state.used_states(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSummary {
    pub sweep: usize,
    pub log_joint: f64,
    pub used_states: usize,
}

/// Resumable blocked Gibbs sampler over a fixed data set.
#[derive(Debug, Clone)]
pub struct GibbsSampler {
    data: Vec<ObsSequence>,
    offsets: Vec<f64>,
    cfg: HdpHsmmConfig,
    scale: DMatrix<f64>,
    state: ModelState,
    sweep: usize,
}

impl GibbsSampler {
    /// Centers the data and draws the initial state (sweep 0).
    pub fn new(data: &[ObsSequence], cfg: &HdpHsmmConfig) -> Result<Self> {
        let (centered, offsets, scale) = Self::prepare(data, cfg)?;
        let state = init_state(&centered, cfg, &scale)?;
        Ok(Self {
            data: centered,
            offsets,
            cfg: cfg.clone(),
            scale,
            state,
            sweep: 0,
        })
    }

    /// Continues a chain from a saved state; `sweep` is the number of
    /// sweeps already completed.
    pub fn resume(data: &[ObsSequence], cfg: &HdpHsmmConfig, state: ModelState, sweep: usize) -> Result<Self> {
        let (centered, offsets, scale) = Self::prepare(data, cfg)?;
        let lens: Vec<usize> = centered.iter().map(ObsSequence::len).collect();
        if state.num_states() != cfg.num_states || state.dim() != centered[0].dim() {
            return Err(Error::Config("checkpoint does not match configuration".into()));
        }
        state
            .check_invariants(&lens)
            .map_err(|e| Error::Config(format!("checkpoint state invalid: {e}")))?;
        Ok(Self {
            data: centered,
            offsets,
            cfg: cfg.clone(),
            scale,
            state,
            sweep,
        })
    }

    fn prepare(data: &[ObsSequence], cfg: &HdpHsmmConfig) -> Result<(Vec<ObsSequence>, Vec<f64>, DMatrix<f64>)> {
        if data.is_empty() {
            return Err(Error::InvalidInput("no observation sequences".into()));
        }
        let dim = data[0].dim();
        if data.iter().any(|s| s.dim() != dim) {
            return Err(Error::InvalidInput("sequences differ in dimension".into()));
        }
        cfg.validate(dim)?;
        let (centered, offsets) = center_sequences(data);
        let scale = cfg.resolve_scale(&centered)?;
        Ok((centered, offsets, scale))
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweep
    }

    pub fn data(&self) -> &[ObsSequence] {
        &self.data
    }

    /// Means removed from the input before fitting.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }

    /// One sweep: messages and segment draws for every sequence, then
    /// parameters, then (optionally) concentrations.
    pub fn step(&mut self) -> Result<SweepSummary> {
        let sweep = self.sweep + 1;
        let segments = sample_all_segments(&self.data, &self.state, &self.cfg, sweep).map_err(|e| match e {
            Error::ZeroLikelihood { frame, sequence, .. } => Error::ZeroLikelihood {
                frame,
                sweep: Some(sweep),
                sequence,
            },
            other => other,
        })?;
        self.state.segments = segments;
        let mut rng = stream_rng(self.cfg.seed, sweep, 0);
        resample_parameters(&self.data, &mut self.state, &self.cfg, &self.scale, &mut rng)?;
        let (alpha, gamma) = resample_hyperparameters(&self.state, &self.cfg, &mut rng);
        self.state.alpha = alpha;
        self.state.gamma = gamma;
        self.sweep = sweep;
        Ok(SweepSummary {
            sweep,
            log_joint: log_joint(&self.data, &self.state, &self.cfg, &self.scale)?,
            used_states: self.state.used_states(),
        })
    }
}

/// Draws a fresh segmentation of every sequence given the current
/// parameters. Sequences run in parallel with independent streams.
pub(crate) fn sample_all_segments(
    data: &[ObsSequence],
    state: &ModelState,
    cfg: &HdpHsmmConfig,
    sweep: usize,
) -> Result<Vec<Vec<Segment>>> {
    let tables = ChainTables::from_state(state, cfg.d_max);
    data.par_iter()
        .enumerate()
        .map(|(q, seq)| {
            let emis = EmissionTable::new(seq, state)?;
            let msgs = backward_messages(&tables, &emis).map_err(|e| match e {
                Error::ZeroLikelihood { frame, sweep, .. } => Error::ZeroLikelihood {
                    frame,
                    sweep,
                    sequence: Some(q),
                },
                other => other,
            })?;
            let mut rng = stream_rng(cfg.seed, sweep, q + 1);
            Ok(sample_segments(&tables, &emis, &msgs, &mut rng))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub state: ModelState,
    pub log_joint: Vec<f64>,
    pub used_states: Vec<usize>,
    pub segmentation: PrimitiveSegmentation,
    /// Per-dimension means removed before fitting.
    pub offsets: Vec<f64>,
}

/// Runs `cfg.iters` sweeps from a fresh initialization.
pub fn fit(data: &[ObsSequence], cfg: &HdpHsmmConfig) -> Result<FitResult> {
    fit_with(data, cfg, |_, _| Ok(()))
}

/// Like [`fit`], calling `observe` after every sweep.
pub fn fit_with<F>(data: &[ObsSequence], cfg: &HdpHsmmConfig, mut observe: F) -> Result<FitResult>
where
    F: FnMut(&GibbsSampler, &SweepSummary) -> Result<()>,
{
    let mut sampler = GibbsSampler::new(data, cfg)?;
    let mut log_joint = Vec::with_capacity(cfg.iters);
    let mut used = Vec::with_capacity(cfg.iters);
    for _ in 0..cfg.iters {
        let s = sampler.step()?;
        observe(&sampler, &s)?;
        log_joint.push(s.log_joint);
        used.push(s.used_states);
    }
    Ok(FitResult {
        segmentation: PrimitiveSegmentation::from_state(&sampler.state),
        offsets: sampler.offsets.clone(),
        state: sampler.state,
        log_joint,
        used_states: used,
    })
}
