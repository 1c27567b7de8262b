//! Mini-batch Adam training with seeded shuffling and early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Forward, Gradients, TrainMeta};
use super::{default_dims, Activation, AeError, AeModel, Scaler};
use crate::features::View;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dims: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub val_frac: f64,
    pub patience: usize,
}

impl TrainConfig {
    pub fn for_view(view: View, seed: u64) -> Self {
        TrainConfig {
            dims: default_dims(view),
            learning_rate: 1e-3,
            epochs: 500,
            batch_size: 64,
            seed,
            val_frac: 0.1,
            patience: 20,
        }
    }

    pub fn validate(&self) -> Result<(), AeError> {
        let bad = |m: &str| Err(AeError::InvalidConfig(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.val_frac) {
            return bad("validation fraction must be in [0, 1)");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        super::validate_dims(&self.dims)
    }
}

/// Per-epoch losses in scaled space.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, model: &mut AeModel, grads: &Gradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let mut k = 0;
        for (layer, g) in model.layers.iter_mut().zip(&grads.layers) {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let grad = g.weights.iter().chain(&g.bias);
            for (p, &gi) in params.zip(grad) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = BETA1 * *m + (1.0 - BETA1) * gi;
                *v = BETA2 * *v + (1.0 - BETA2) * gi * gi;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                k += 1;
            }
        }
    }
}

/// Trains a view autoencoder on raw (unscaled) normal rows.
pub fn train(view: View, rows: &[Vec<f64>], cfg: &TrainConfig) -> Result<AeModel, AeError> {
    train_with_history(view, rows, cfg).map(|(m, _)| m)
}

pub fn train_with_history(view: View, rows: &[Vec<f64>], cfg: &TrainConfig) -> Result<(AeModel, TrainHistory), AeError> {
    cfg.validate()?;
    if rows.is_empty() {
        return Err(AeError::EmptyInput);
    }
    if cfg.dims[0] != view.width() {
        return Err(AeError::DimensionMismatch {
            expected: view.width(),
            found: cfg.dims[0],
        });
    }
    let scaler = Scaler::fit(rows)?;
    let data = scaler.transform_all(rows)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = AeModel::init(view, &cfg.dims, Activation::Tanh, scaler, &mut rng)?;
    if rows.len() < model.param_count() {
        log::warn!(
            "{view} autoencoder: {} training rows for {} parameters; results may overfit",
            rows.len(),
            model.param_count()
        );
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (data.len() as f64 * cfg.val_frac).floor() as usize;
    let n_val = if n_val == data.len() { 0 } else { n_val };
    let (val_idx, train_idx) = order.split_at(n_val);
    let val: Vec<Vec<f64>> = val_idx.iter().map(|&i| data[i].clone()).collect();
    let mut train_idx = train_idx.to_vec();

    let mut adam = Adam::new(model.param_count());
    let mut grads = Gradients::zeros_like(&model);
    let mut fwd = Forward::default();
    let (mut delta, mut next) = (Vec::new(), Vec::new());
    let mut history = TrainHistory::default();
    let mut best = (f64::INFINITY, model.layers.clone(), 0usize);
    let mut epochs_run = 0;

    for epoch in 1..=cfg.epochs {
        epochs_run = epoch;
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            grads.clear();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                model.forward_into(&data[i], &mut fwd);
                epoch_loss += model.accumulate_gradients(&fwd, &data[i], scale, &mut grads, &mut delta, &mut next);
            }
            adam.step(&mut model, &grads, cfg.learning_rate);
        }
        epoch_loss /= train_idx.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(AeError::Diverged { epoch });
        }
        history.train_loss.push(epoch_loss);

        let monitor = if val.is_empty() {
            epoch_loss
        } else {
            let v = model.loss(&val)?;
            if !v.is_finite() {
                return Err(AeError::Diverged { epoch });
            }
            history.val_loss.push(v);
            v
        };
        if monitor < best.0 {
            best = (monitor, model.layers.clone(), epoch);
        } else if epoch - best.2 >= cfg.patience {
            log::debug!("{view} autoencoder: early stop at epoch {epoch}, best {}", best.2);
            break;
        }
    }

    model.layers = best.1;
    history.best_epoch = best.2;
    let train_rows: Vec<Vec<f64>> = train_idx.iter().map(|&i| data[i].clone()).collect();
    let final_loss = model.loss(&train_rows)?;
    model.train_meta = Some(TrainMeta {
        seed: cfg.seed,
        epochs: cfg.epochs,
        epochs_run,
        best_epoch: best.2,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        train_rows: train_rows.len(),
        val_rows: val.len(),
        final_loss,
        val_loss: if val.is_empty() { None } else { Some(best.0) },
    });
    Ok((model, history))
}
