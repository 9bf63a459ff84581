//! Fully connected deep autoencoder trained with minibatch gradient descent.
//!
//! Hidden layers use `tanh`, the output layer is linear. Inputs are
//! standardized per dimension with statistics fitted at training time and
//! stored alongside the weights.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LATENT_DIM: usize = 24;
pub const INPUT_DIM: usize = 242;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation value.
    #[inline]
    fn slope_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }

    fn code(self) -> u32 {
        match self {
            Activation::Tanh => 0,
            Activation::Identity => 1,
        }
    }

    fn from_code(c: u32) -> Result<Self> {
        match c {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::Identity),
            _ => Err(Error::BadModelFile(format!("unknown activation code {c}"))),
        }
    }
}

/// Layer widths of a symmetric autoencoder, input first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    /// 242 -> 180 -> 121 -> 80 -> 40 -> 24 and mirrored back.
    pub fn velocity_field() -> Self {
        Self::symmetric(&[INPUT_DIM, 180, 121, 80, 40, LATENT_DIM]).expect("static widths are valid")
    }

    /// Builds a mirrored spec from the encoder half, input width first.
    pub fn symmetric(encoder: &[usize]) -> Result<Self> {
        let mut widths = encoder.to_vec();
        widths.extend(encoder.iter().rev().skip(1));
        Self::new(widths)
    }

    pub fn new(widths: Vec<usize>) -> Result<Self> {
        let spec = Self {
            widths,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Identity,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.widths;
        if w.len() < 3 || w.len().is_multiple_of(2) {
            return Err(Error::Config(
                "autoencoder needs an odd number (>= 3) of layer widths".into(),
            ));
        }
        if w.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if w.iter().ne(w.iter().rev()) {
            return Err(Error::Config("autoencoder widths must be symmetric".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn latent_dim(&self) -> usize {
        self.widths[self.latent_index()]
    }

    /// Index into the activation list of the bottleneck layer.
    pub fn latent_index(&self) -> usize {
        self.widths.len() / 2
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }
}

impl Default for MlpSpec {
    fn default() -> Self {
        Self::velocity_field()
    }
}

/// One affine layer. `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let layers = spec.widths.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Self {
            spec: spec.clone(),
            layers,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(spec: &MlpSpec, rng: &mut R) -> Self {
        let mut p = Self::zeros(spec);
        for l in &mut p.layers {
            let bound = (6.0 / (l.inputs + l.outputs) as f64).sqrt();
            for w in &mut l.weights {
                *w = rng.random_range(-bound..bound);
            }
        }
        p
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.spec.output_activation
        } else {
            self.spec.hidden_activation
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All weights and biases, layer by layer (weights then bias).
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        v
    }

    pub fn flat_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

/// Cached activations of one forward pass; `activations[0]` is the input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub activations: Vec<Vec<f64>>,
    latent_index: usize,
}

impl ForwardPass {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("at least input and output")
    }

    pub fn latent(&self) -> &[f64] {
        &self.activations[self.latent_index]
    }
}

pub fn forward(params: &MlpParams, x: &[f64]) -> Result<ForwardPass> {
    if x.len() != params.spec.input_dim() {
        return Err(Error::InvalidInput(format!(
            "expected input of length {}, got {}",
            params.spec.input_dim(),
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite autoencoder input".into()));
    }
    let mut activations = Vec::with_capacity(params.layers.len() + 1);
    activations.push(x.to_vec());
    for (li, layer) in params.layers.iter().enumerate() {
        let act = params.activation(li);
        let input = activations.last().expect("non-empty");
        let mut out = layer.bias.clone();
        for (o, row) in out.iter_mut().zip(layer.weights.chunks_exact(layer.inputs)) {
            let z = *o + dot(row, input);
            *o = act.apply(z);
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow);
        }
        activations.push(out);
    }
    Ok(ForwardPass {
        activations,
        latent_index: params.spec.latent_index(),
    })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Bottleneck activation for `x`.
pub fn encode(params: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    Ok(forward(params, x)?.latent().to_vec())
}

/// Mean squared reconstruction error over the batch and all output
/// dimensions, with its exact gradient.
pub fn loss_and_gradients<S: AsRef<[f64]>>(params: &MlpParams, batch: &[S]) -> Result<(f64, MlpParams)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let mut grads = MlpParams::zeros(&params.spec);
    let n_out = *params.spec.widths.last().expect("validated");
    let scale = 2.0 / (batch.len() * n_out) as f64;
    let mut sse = 0.0;
    for x in batch {
        let x = x.as_ref();
        let pass = forward(params, x)?;
        let out = pass.output();
        let mut delta: Vec<f64> = out
            .iter()
            .zip(x)
            .map(|(o, t)| {
                let e = o - t;
                sse += e * e;
                scale * e
            })
            .collect();
        for li in (0..params.layers.len()).rev() {
            let layer = &params.layers[li];
            let act = params.activation(li);
            let a_out = &pass.activations[li + 1];
            for (d, a) in delta.iter_mut().zip(a_out) {
                *d *= act.slope_from_output(*a);
            }
            let a_in = &pass.activations[li];
            let g = &mut grads.layers[li];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, &a) in row.iter_mut().zip(a_in) {
                    *gw += d * a;
                }
            }
            if li > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                delta = prev;
            }
        }
    }
    Ok((sse / (batch.len() * n_out) as f64, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub step_size: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            epochs: 200,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "training needs step_size > 0, epochs >= 1 and batch_size >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-dimension affine standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-8;

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn fit<S: AsRef<[f64]>>(data: &[S]) -> Self {
        let dim = data[0].as_ref().len();
        let n = data.len() as f64;
        let mut mean = vec![0.0; dim];
        for x in data {
            for (m, v) in mean.iter_mut().zip(x.as_ref()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for x in data {
            for ((s, v), m) in var.iter_mut().zip(x.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// Trained weights plus the input standardization they expect.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub params: MlpParams,
    pub standardizer: Standardizer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Autoencoder,
    /// Mean squared error on the standardized training set after each epoch.
    pub loss_history: Vec<f64>,
}

impl Autoencoder {
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        encode(&self.params, &self.standardizer.apply(x))
    }

    pub fn encode_batch<S: AsRef<[f64]>>(&self, xs: &[S]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.encode(x.as_ref())).collect()
    }

    /// Reconstruction in the original (unstandardized) units.
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pass = forward(&self.params, &self.standardizer.apply(x))?;
        Ok(self.standardizer.invert(pass.output()))
    }

    const MAGIC: &'static [u8; 4] = b"TPAE";
    const VERSION: u32 = 1;

    /// Serializes as: magic `TPAE`, version, width count, widths, hidden and
    /// output activation codes, standardization mean and std, then each
    /// layer's row-major weights followed by its bias. Little-endian
    /// throughout; counts are u32, values f64.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let spec = &self.params.spec;
        w.write_all(Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        w.write_all(&(spec.widths.len() as u32).to_le_bytes())?;
        for &n in &spec.widths {
            w.write_all(&(n as u32).to_le_bytes())?;
        }
        w.write_all(&spec.hidden_activation.code().to_le_bytes())?;
        w.write_all(&spec.output_activation.code().to_le_bytes())?;
        for v in self.standardizer.mean.iter().chain(&self.standardizer.std) {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in self.params.flat() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::BadModelFile("missing TPAE magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != Self::VERSION {
            return Err(Error::BadModelFile(format!("unsupported version {version}")));
        }
        let count = read_u32(&mut r)? as usize;
        if count > 1024 {
            return Err(Error::BadModelFile("implausible layer count".into()));
        }
        let widths = (0..count)
            .map(|_| read_u32(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let hidden = Activation::from_code(read_u32(&mut r)?)?;
        let output = Activation::from_code(read_u32(&mut r)?)?;
        let spec = MlpSpec {
            widths,
            hidden_activation: hidden,
            output_activation: output,
        };
        spec.validate().map_err(|e| Error::BadModelFile(e.to_string()))?;
        let dim = spec.input_dim();
        let mean = (0..dim).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let std = (0..dim).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let mut params = MlpParams::zeros(&spec);
        for v in params.flat_mut() {
            *v = read_f64(&mut r)?;
        }
        if !params.is_finite() {
            return Err(Error::BadModelFile("non-finite weights".into()));
        }
        Ok(Self {
            params,
            standardizer: Standardizer { mean, std },
        })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Minibatch gradient descent with a fixed step. Data order is reshuffled
/// every epoch from a generator seeded with `cfg.seed`.
pub fn train<S: AsRef<[f64]>>(spec: &MlpSpec, data: &[S], cfg: &TrainConfig) -> Result<TrainOutcome> {
    spec.validate()?;
    cfg.validate()?;
    if data.len() < cfg.batch_size {
        return Err(Error::InvalidInput(format!(
            "need at least batch_size = {} samples, got {}",
            cfg.batch_size,
            data.len()
        )));
    }
    if data.iter().any(|x| x.as_ref().len() != spec.input_dim()) {
        return Err(Error::InvalidInput("training vector has wrong length".into()));
    }
    let standardizer = Standardizer::fit(data);
    let standardized: Vec<Vec<f64>> = data.iter().map(|x| standardizer.apply(x.as_ref())).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = MlpParams::init(spec, &mut rng);
    let mut order: Vec<usize> = (0..standardized.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| standardized[i].as_slice()));
            let (loss, grads) = match loss_and_gradients(&params, &batch) {
                Ok(v) => v,
                Err(Error::NumericOverflow) => return Err(Error::TrainingDiverged { epoch }),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            for (p, g) in params.flat_mut().zip(grads.flat()) {
                *p -= cfg.step_size * g;
            }
        }
        let loss = match dataset_mse(&params, &standardized) {
            Ok(l) if l.is_finite() => l,
            Ok(_) | Err(Error::NumericOverflow) => return Err(Error::TrainingDiverged { epoch }),
            Err(e) => return Err(e),
        };
        history.push(loss);
    }
    Ok(TrainOutcome {
        model: Autoencoder { params, standardizer },
        loss_history: history,
    })
}

fn dataset_mse(params: &MlpParams, data: &[Vec<f64>]) -> Result<f64> {
    let mut sse = 0.0;
    let mut count = 0usize;
    for x in data {
        let pass = forward(params, x)?;
        sse += pass.output().iter().zip(x).map(|(o, t)| (o - t) * (o - t)).sum::<f64>();
        count += x.len();
    }
    Ok(sse / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_params(widths: &[usize], seed: u64) -> MlpParams {
        let spec = MlpSpec::new(widths.to_vec()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = MlpParams::init(&spec, &mut rng);
        for l in &mut p.layers {
            for b in &mut l.bias {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        p
    }

    #[test]
    fn spec_shapes() {
        let s = MlpSpec::velocity_field();
        assert_eq!(s.widths, vec![242, 180, 121, 80, 40, 24, 40, 80, 121, 180, 242]);
        assert_eq!(s.latent_dim(), 24);
        assert_eq!(s.num_layers(), 10);
        assert!(MlpSpec::new(vec![4, 2, 3]).is_err());
        assert!(MlpSpec::new(vec![4, 2]).is_err());
    }

    #[test]
    fn zero_params_give_zero_output() {
        let p = MlpParams::zeros(&MlpSpec::velocity_field());
        let x: Vec<f64> = (0..242).map(|i| (i as f64).sin()).collect();
        let pass = forward(&p, &x).unwrap();
        assert!(pass.output().iter().all(|&v| v == 0.0));
        assert!(pass.latent().iter().all(|&v| v == 0.0));
        assert_eq!(encode(&p, &x).unwrap(), vec![0.0; 24]);
    }

    #[test]
    fn identity_network() {
        let mut spec = MlpSpec::new(vec![2, 2, 2]).unwrap();
        spec.hidden_activation = Activation::Identity;
        let mut p = MlpParams::zeros(&spec);
        for l in &mut p.layers {
            l.weights = vec![1.0, 0.0, 0.0, 1.0];
        }
        let pass = forward(&p, &[0.3, -2.0]).unwrap();
        assert_eq!(pass.output(), &[0.3, -2.0]);
    }

    #[test]
    fn forward_matches_independent_recomputation() {
        let p = random_params(&[5, 4, 3, 4, 5], 3);
        let x = [0.2, -0.4, 1.1, 0.0, -0.9];
        let pass = forward(&p, &x).unwrap();
        let mut a = x.to_vec();
        for (li, l) in p.layers.iter().enumerate() {
            let mut next = Vec::new();
            for o in 0..l.outputs {
                let mut z = l.bias[o];
                for i in 0..l.inputs {
                    z += l.weights[o * l.inputs + i] * a[i];
                }
                next.push(if li + 1 == p.layers.len() { z } else { z.tanh() });
            }
            a = next;
        }
        for (u, v) in pass.output().iter().zip(&a) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        let p = random_params(&[3, 2, 3], 0);
        assert!(forward(&p, &[0.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn overflow_detected() {
        let mut spec = MlpSpec::new(vec![1, 1, 1]).unwrap();
        spec.hidden_activation = Activation::Identity;
        let mut p = MlpParams::zeros(&spec);
        p.layers[0].weights[0] = 1e300;
        p.layers[1].weights[0] = 1e300;
        assert!(matches!(forward(&p, &[1e10]), Err(Error::NumericOverflow)));
    }

    #[test]
    fn exact_reconstruction_has_zero_gradient() {
        let mut spec = MlpSpec::new(vec![2, 2, 2]).unwrap();
        spec.hidden_activation = Activation::Identity;
        let mut p = MlpParams::zeros(&spec);
        for l in &mut p.layers {
            l.weights = vec![1.0, 0.0, 0.0, 1.0];
        }
        let (mse, g) = loss_and_gradients(&p, &[vec![1.0, 2.0], vec![-0.5, 0.25]]).unwrap();
        assert_eq!(mse, 0.0);
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_chain_hand_derivative() {
        // x -> tanh(w1 x + b1) -> w2 h + b2, loss (y - x)^2
        let spec = MlpSpec::new(vec![1, 1, 1]).unwrap();
        let mut p = MlpParams::zeros(&spec);
        let (w1, b1, w2, b2, x) = (0.7, -0.2, 1.3, 0.1, 0.5);
        p.layers[0].weights[0] = w1;
        p.layers[0].bias[0] = b1;
        p.layers[1].weights[0] = w2;
        p.layers[1].bias[0] = b2;
        let h = (w1 * x + b1).tanh();
        let y = w2 * h + b2;
        let e = y - x;
        let (mse, g) = loss_and_gradients(&p, &[vec![x]]).unwrap();
        assert!((mse - e * e).abs() < 1e-15);
        let dy = 2.0 * e;
        assert!((g.layers[1].weights[0] - dy * h).abs() < 1e-15);
        assert!((g.layers[1].bias[0] - dy).abs() < 1e-15);
        let dz = dy * w2 * (1.0 - h * h);
        assert!((g.layers[0].weights[0] - dz * x).abs() < 1e-15);
        assert!((g.layers[0].bias[0] - dz).abs() < 1e-15);
    }

    #[test]
    fn model_file_roundtrip() {
        let p = random_params(&[6, 4, 2, 4, 6], 9);
        let m = Autoencoder {
            params: p,
            standardizer: Standardizer {
                mean: vec![0.5; 6],
                std: vec![2.0; 6],
            },
        };
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"TPAE");
        let back = Autoencoder::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        buf[0] = b'X';
        assert!(Autoencoder::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn train_rejects_small_data_and_reports_divergence() {
        let spec = MlpSpec::new(vec![2, 1, 2]).unwrap();
        let data = vec![vec![0.0, 1.0]; 3];
        let cfg = TrainConfig {
            batch_size: 4,
            ..Default::default()
        };
        assert!(train(&spec, &data, &cfg).is_err());

        let data: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64, -(i as f64)]).collect();
        let cfg = TrainConfig {
            step_size: 1e6,
            epochs: 50,
            batch_size: 4,
            seed: 1,
        };
        let err = train(&spec, &data, &cfg).unwrap_err();
        assert!(matches!(err, Error::TrainingDiverged { .. }), "{err}");
    }
}
