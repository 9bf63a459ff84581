//! Sampling and density helpers for the segmenter's conjugate updates.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Beta, ChiSquared, Distribution, Gamma, Poisson, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Smallest probability kept after Dirichlet draws, so logs stay finite.
pub const PROB_FLOOR: f64 = 1e-300;

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Gamma draw with shape/rate parameterization.
pub fn gamma<R: Rng>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters are positive")
        .sample(rng)
}

/// Logarithm of a Gamma(shape, 1) draw, accurate for tiny shapes.
fn log_gamma_draw<R: Rng>(rng: &mut R, shape: f64) -> f64 {
    if shape >= 1.0 {
        gamma(rng, shape, 1.0).ln()
    } else {
        // G(a) = G(a + 1) * U^(1/a)
        let g = gamma(rng, shape + 1.0, 1.0).ln();
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        g + u.ln() / shape
    }
}

/// Dirichlet draw computed in log space; entries are floored at
/// [`PROB_FLOOR`] and renormalized.
pub fn dirichlet<R: Rng>(rng: &mut R, conc: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = conc.iter().map(|&a| log_gamma_draw(rng, a)).collect();
    let lse = logsumexp(&logs);
    let mut p: Vec<f64> = logs.iter().map(|l| (l - lse).exp().max(PROB_FLOOR)).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

pub fn beta<R: Rng>(rng: &mut R, a: f64, b: f64) -> f64 {
    Beta::new(a, b).expect("beta parameters are positive").sample(rng)
}

/// Number of failures accumulated over `n` geometric trials with success
/// probability `p`, drawn as a gamma-Poisson mixture.
pub fn negative_binomial<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p >= 1.0 {
        return 0;
    }
    let p = p.max(1e-12);
    let lambda = gamma(rng, n as f64, p / (1.0 - p));
    let lambda = lambda.min(1e12);
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("finite positive rate").sample(rng) as u64
}

/// Chinese-restaurant table count for `customers` customers with weight
/// `conc`. Exact Bernoulli draws for the first block, Poisson
/// approximation for very long tails.
pub fn crp_tables<R: Rng>(rng: &mut R, customers: u64, conc: f64) -> u64 {
    const EXACT: u64 = 20_000;
    if customers == 0 {
        return 0;
    }
    let exact = customers.min(EXACT);
    let mut tables = 0;
    for k in 0..exact {
        let p = conc / (conc + k as f64);
        if rng.random::<f64>() < p {
            tables += 1;
        }
    }
    if customers > exact {
        let mean = conc * ((conc + customers as f64 - 1.0) / (conc + exact as f64 - 1.0)).ln();
        if mean > 0.0 {
            tables += Poisson::new(mean).expect("positive mean").sample(rng) as u64;
        }
    }
    tables
}

/// Shifted Poisson log pmf: `d - 1 ~ Poisson(rate)`, `d >= 1`.
pub fn shifted_poisson_ln_pmf(d: usize, rate: f64) -> f64 {
    if d == 0 {
        return f64::NEG_INFINITY;
    }
    let k = (d - 1) as f64;
    k * rate.ln() - rate - ln_gamma(k + 1.0)
}

/// Shifted Poisson log pmf truncated to `[1, d_max]` and renormalized.
/// Entry `i` holds the value for duration `i + 1`.
pub fn truncated_duration_table(rate: f64, d_max: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=d_max).map(|d| shifted_poisson_ln_pmf(d, rate)).collect();
    let z = logsumexp(&raw);
    raw.into_iter().map(|v| v - z).collect()
}

pub fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

fn ln_multigamma(a: f64, dim: usize) -> f64 {
    let d = dim as f64;
    d * (d - 1.0) / 4.0 * std::f64::consts::PI.ln()
        + (1..=dim).map(|j| ln_gamma(a + (1.0 - j as f64) / 2.0)).sum::<f64>()
}

/// Lower Cholesky factor, or a config error when `m` is not SPD.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::Cholesky::new(m.clone()).map(|c| c.l())
}

fn ln_det_from_lower(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Inverse of a lower-triangular matrix.
fn lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for col in 0..n {
        inv[(col, col)] = 1.0 / l[(col, col)];
        for row in (col + 1)..n {
            let mut s = 0.0;
            for k in col..row {
                s += l[(row, k)] * inv[(k, col)];
            }
            inv[(row, col)] = -s / l[(row, row)];
        }
    }
    inv
}

/// Inverse-Wishart draw `Sigma ~ IW(df, scale)` via the Bartlett
/// decomposition of the matching Wishart on the precision.
pub fn inverse_wishart<R: Rng>(rng: &mut R, df: f64, scale: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = scale.nrows();
    if df <= (dim as f64) - 1.0 {
        return Err(Error::Config(format!(
            "inverse-Wishart degrees of freedom {df} too small for dimension {dim}"
        )));
    }
    let scale_l =
        cholesky_lower(scale).ok_or_else(|| Error::Config("inverse-Wishart scale is not positive definite".into()))?;
    // chol(scale^-1) = (L^-T) rearranged; use precision = scale^-1 directly
    let scale_l_inv = lower_inverse(&scale_l);
    let precision = scale_l_inv.transpose() * &scale_l_inv;
    let prec_l = cholesky_lower(&symmetrize(&precision))
        .ok_or_else(|| Error::Config("inverse-Wishart scale is ill-conditioned".into()))?;

    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let chi = ChiSquared::new(df - i as f64).expect("df checked above");
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let t = prec_l * a;
    let t_inv = lower_inverse(&t);
    Ok(symmetrize(&(t_inv.transpose() * t_inv)))
}

pub fn inverse_wishart_ln_pdf(sigma: &DMatrix<f64>, df: f64, scale: &DMatrix<f64>) -> Option<f64> {
    let dim = sigma.nrows();
    let d = dim as f64;
    let sl = cholesky_lower(sigma)?;
    let pl = cholesky_lower(scale)?;
    let sl_inv = lower_inverse(&sl);
    let sigma_inv = sl_inv.transpose() * sl_inv;
    let trace = (scale * sigma_inv).trace();
    Some(
        df / 2.0 * ln_det_from_lower(&pl)
            - df * d / 2.0 * std::f64::consts::LN_2
            - ln_multigamma(df / 2.0, dim)
            - (df + d + 1.0) / 2.0 * ln_det_from_lower(&sl)
            - trace / 2.0,
    )
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Zero-mean Gaussian with cached Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroMeanGaussian {
    dim: usize,
    /// Row-major lower Cholesky factor.
    chol: Vec<f64>,
    log_norm: f64,
}

impl ZeroMeanGaussian {
    pub fn new(cov: &DMatrix<f64>) -> Option<Self> {
        let l = cholesky_lower(cov)?;
        let dim = cov.nrows();
        let mut chol = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                chol[i * dim + j] = l[(i, j)];
            }
        }
        let log_norm = -0.5 * (dim as f64 * (2.0 * std::f64::consts::PI).ln() + ln_det_from_lower(&l));
        Some(Self { dim, chol, log_norm })
    }

    pub fn ln_pdf(&self, x: &[f64]) -> f64 {
        let n = self.dim;
        let mut y = [0.0f64; 64];
        let mut heap;
        let y: &mut [f64] = if n <= 64 {
            &mut y[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        let mut quad = 0.0;
        for i in 0..n {
            let row = &self.chol[i * n..i * n + i];
            let s: f64 = row.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
            y[i] = (x[i] - s) / self.chol[i * n + i];
            quad += y[i] * y[i];
        }
        self.log_norm - 0.5 * quad
    }

    /// Draw `L z` with standard normal `z`.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.dim;
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        (0..n)
            .map(|i| (0..=i).map(|j| self.chol[i * n + j] * z[j]).sum())
            .collect()
    }
}
