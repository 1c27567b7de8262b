//! Dense encoder/decoder stack with manual backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AeError, Scaler};
use crate::features::View;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    /// Linear hidden layers; only used by test harnesses.
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

    /// Derivative expressed through the activation output.
    #[inline]
    fn slope_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected layer; `weights` is row-major `n_out x n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    /// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero bias.
    pub fn glorot<R: Rng>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let mut d = Dense::zeros(n_in, n_out);
        for w in &mut d.weights {
            *w = rng.random_range(-limit..=limit);
        }
        d
    }

    #[inline]
    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            let mut acc = self.bias[o];
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            out.push(acc);
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Validates an autoencoder layout: odd length >= 3, symmetric, positive.
pub fn validate_dims(dims: &[usize]) -> Result<(), AeError> {
    let bad = |why: &str| Err(AeError::InvalidDims(format!("{dims:?}: {why}")));
    if dims.len() < 3 || dims.len() % 2 == 0 {
        return bad("need an odd number (>= 3) of layer sizes");
    }
    if dims.contains(&0) {
        return bad("layer sizes must be positive");
    }
    if dims.iter().zip(dims.iter().rev()).any(|(a, b)| a != b) {
        return bad("encoder and decoder must mirror each other");
    }
    Ok(())
}

/// Training provenance stored with each model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub train_rows: usize,
    pub val_rows: usize,
    pub final_loss: f64,
    pub val_loss: Option<f64>,
}

/// One view's trained autoencoder: scaler, layers, architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    pub view: View,
    pub dims: Vec<usize>,
    pub activation: Activation,
    pub scaler: Scaler,
    pub layers: Vec<Dense>,
    pub train_meta: Option<TrainMeta>,
}

/// Cached activations of one forward pass (`acts[0]` is the input).
#[derive(Debug, Clone, Default)]
pub struct Forward {
    pub acts: Vec<Vec<f64>>,
}

impl Forward {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("forward pass has an output")
    }
}

/// Parameter gradients laid out like [`AeModel::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(m: &AeModel) -> Self {
        Gradients {
            layers: m.layers.iter().map(|l| Dense::zeros(l.n_in, l.n_out)).collect(),
        }
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    /// Flattened in the same order as [`AeModel::param`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }
}

/// Mean squared reconstruction error.
pub fn mse(x: &[f64], x_hat: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), x_hat.len());
    x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64
}

impl AeModel {
    /// Builds a model with Glorot-uniform weights drawn from `rng`.
    pub fn init<R: Rng>(view: View, dims: &[usize], activation: Activation, scaler: Scaler, rng: &mut R) -> Result<Self, AeError> {
        validate_dims(dims)?;
        if scaler.dim() != dims[0] {
            return Err(AeError::DimensionMismatch {
                expected: dims[0],
                found: scaler.dim(),
            });
        }
        let layers = dims.windows(2).map(|p| Dense::glorot(p[0], p[1], rng)).collect();
        Ok(AeModel {
            view,
            dims: dims.to_vec(),
            activation,
            scaler,
            layers,
            train_meta: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn latent_dim(&self) -> usize {
        self.dims[self.bottleneck()]
    }

    /// Index into `dims` (and `Forward::acts`) of the bottleneck.
    pub fn bottleneck(&self) -> usize {
        self.dims.len() / 2
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    fn locate(&self, mut i: usize) -> (usize, bool, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            if i < l.weights.len() {
                return (li, true, i);
            }
            i -= l.weights.len();
            if i < l.bias.len() {
                return (li, false, i);
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Flat parameter access: per layer, weights then biases.
    pub fn param(&self, i: usize) -> f64 {
        let (l, is_w, k) = self.locate(i);
        if is_w {
            self.layers[l].weights[k]
        } else {
            self.layers[l].bias[k]
        }
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        let (l, is_w, k) = self.locate(i);
        if is_w {
            self.layers[l].weights[k] = v;
        } else {
            self.layers[l].bias[k] = v;
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<(), AeError> {
        if x.len() != self.input_dim() {
            return Err(AeError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Forward pass on an already scaled vector.
    pub fn forward(&self, x: &[f64]) -> Result<Forward, AeError> {
        self.check_input(x)?;
        let mut fwd = Forward::default();
        self.forward_into(x, &mut fwd);
        Ok(fwd)
    }

    pub(crate) fn forward_into(&self, x: &[f64], fwd: &mut Forward) {
        let n = self.layers.len();
        fwd.acts.resize_with(n + 1, Vec::new);
        fwd.acts[0].clear();
        fwd.acts[0].extend_from_slice(x);
        for (li, layer) in self.layers.iter().enumerate() {
            let (before, after) = fwd.acts.split_at_mut(li + 1);
            let out = &mut after[0];
            layer.forward_into(&before[li], out);
            if li + 1 < n {
                for v in out.iter_mut() {
                    *v = self.activation.apply(*v);
                }
            }
        }
    }

    /// Accumulates `scale * dLoss/dparams` for one sample into `grads`,
    /// where the sample loss is its MSE. Returns that MSE.
    pub(crate) fn accumulate_gradients(&self, fwd: &Forward, target: &[f64], scale: f64, grads: &mut Gradients, delta: &mut Vec<f64>, next: &mut Vec<f64>) -> f64 {
        let out = fwd.output();
        let f = out.len() as f64;
        delta.clear();
        delta.extend(out.iter().zip(target).map(|(o, t)| 2.0 * (o - t) / f * scale));
        let loss = mse(target, out);

        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let g = &mut grads.layers[li];
            let input = &fwd.acts[li];
            for ((&d, gb), row) in delta.iter().zip(&mut g.bias).zip(g.weights.chunks_exact_mut(layer.n_in)) {
                *gb += d;
                for (gw, xi) in row.iter_mut().zip(input) {
                    *gw += d * xi;
                }
            }
            if li == 0 {
                break;
            }
            next.clear();
            next.resize(layer.n_in, 0.0);
            for (&d, row) in delta.iter().zip(layer.weights.chunks_exact(layer.n_in)) {
                for (acc, w) in next.iter_mut().zip(row) {
                    *acc += d * w;
                }
            }
            for (acc, a) in next.iter_mut().zip(input) {
                *acc *= self.activation.slope_from_output(*a);
            }
            std::mem::swap(delta, next);
        }
        loss
    }

    /// Mean per-sample MSE over scaled `batch` and its gradient.
    pub fn loss_and_gradients(&self, batch: &[Vec<f64>]) -> Result<(f64, Gradients), AeError> {
        if batch.is_empty() {
            return Err(AeError::EmptyInput);
        }
        let mut grads = Gradients::zeros_like(self);
        let mut fwd = Forward::default();
        let (mut delta, mut next) = (Vec::new(), Vec::new());
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for x in batch {
            self.check_input(x)?;
            self.forward_into(x, &mut fwd);
            total += self.accumulate_gradients(&fwd, x, scale, &mut grads, &mut delta, &mut next);
        }
        Ok((total * scale, grads))
    }

    /// Mean per-sample MSE over scaled `batch`.
    pub fn loss(&self, batch: &[Vec<f64>]) -> Result<f64, AeError> {
        if batch.is_empty() {
            return Err(AeError::EmptyInput);
        }
        let mut fwd = Forward::default();
        let mut total = 0.0;
        for x in batch {
            self.check_input(x)?;
            self.forward_into(x, &mut fwd);
            total += mse(x, fwd.output());
        }
        Ok(total / batch.len() as f64)
    }

    /// Scales a raw row and reconstructs it: `(x, x_hat)` in scaled space.
    pub fn reconstruct(&self, raw: &[f64]) -> Result<(Vec<f64>, Vec<f64>), AeError> {
        let x = self.scaler.transform(raw)?;
        let fwd = self.forward(&x)?;
        let x_hat = fwd.output().to_vec();
        Ok((x, x_hat))
    }

    /// Per-row reconstruction MSE in scaled space.
    pub fn reconstruction_errors(&self, raw_rows: &[Vec<f64>]) -> Result<Vec<f64>, AeError> {
        let mut fwd = Forward::default();
        raw_rows
            .iter()
            .map(|r| {
                let x = self.scaler.transform(r)?;
                self.forward_into(&x, &mut fwd);
                Ok(mse(&x, fwd.output()))
            })
            .collect()
    }

    /// Per-row bottleneck activations.
    pub fn latent(&self, raw_rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, AeError> {
        let mut fwd = Forward::default();
        let k = self.bottleneck();
        raw_rows
            .iter()
            .map(|r| {
                let x = self.scaler.transform(r)?;
                self.forward_into(&x, &mut fwd);
                Ok(fwd.acts[k].clone())
            })
            .collect()
    }
}
