//! From-scratch dense autoencoder: standardization, forward and backward
//! passes, Adam training, reconstruction errors and latent projection.

mod network;
mod scaler;
mod train;

use serde::{Deserialize, Serialize};

use crate::features::View;

pub use network::{mse, validate_dims, Activation, AeModel, Dense, Forward, Gradients, TrainMeta};
pub use scaler::{Scaler, STD_FLOOR};
pub use train::{train, train_with_history, TrainConfig, TrainHistory};

pub const MODEL_VERSION: u32 = 1;

pub const SEQ_DIMS: [usize; 7] = [6, 16, 8, 3, 8, 16, 6];
pub const TEMP_DIMS: [usize; 5] = [8, 8, 2, 8, 8];

/// Reference layer sizes for a view.
pub fn default_dims(view: View) -> Vec<usize> {
    match view {
        View::Seq => SEQ_DIMS.to_vec(),
        View::Temp => TEMP_DIMS.to_vec(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AeError {
    #[error("no input rows")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid layer sizes {0}")]
    InvalidDims(String),
    #[error("training diverged at epoch {epoch} (non-finite loss); lower the learning rate")]
    Diverged { epoch: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid model file: {0}")]
    ModelFile(String),
}

/// On-disk model layout. Weights are nested `[layer][out][in]` arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub view: View,
    pub dims: Vec<usize>,
    pub activation: Activation,
    pub scaler: Scaler,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub train_meta: Option<TrainMeta>,
}

impl From<&AeModel> for ModelFile {
    fn from(m: &AeModel) -> Self {
        ModelFile {
            version: MODEL_VERSION,
            view: m.view,
            dims: m.dims.clone(),
            activation: m.activation,
            scaler: m.scaler.clone(),
            weights: m
                .layers
                .iter()
                .map(|l| l.weights.chunks(l.n_in).map(<[f64]>::to_vec).collect())
                .collect(),
            biases: m.layers.iter().map(|l| l.bias.clone()).collect(),
            train_meta: m.train_meta.clone(),
        }
    }
}

impl TryFrom<ModelFile> for AeModel {
    type Error = AeError;

    fn try_from(f: ModelFile) -> Result<Self, AeError> {
        let bad = |msg: String| Err(AeError::ModelFile(msg));
        if f.version != MODEL_VERSION {
            return bad(format!("unsupported version {}", f.version));
        }
        validate_dims(&f.dims)?;
        if f.dims[0] != f.view.width() {
            return bad(format!("{} view expects {} inputs, dims start with {}", f.view, f.view.width(), f.dims[0]));
        }
        let d = f.dims[0];
        if f.scaler.means.len() != d || f.scaler.stds.len() != d || f.scaler.degenerate.len() != d {
            return bad("scaler width does not match dims".into());
        }
        let n_layers = f.dims.len() - 1;
        if f.weights.len() != n_layers || f.biases.len() != n_layers {
            return bad(format!("expected {n_layers} layers"));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (li, (w, b)) in f.weights.into_iter().zip(f.biases).enumerate() {
            let (n_in, n_out) = (f.dims[li], f.dims[li + 1]);
            if w.len() != n_out || w.iter().any(|r| r.len() != n_in) || b.len() != n_out {
                return bad(format!("layer {li} is not {n_out}x{n_in}"));
            }
            let weights: Vec<f64> = w.into_iter().flatten().collect();
            if weights.iter().chain(&b).any(|v| !v.is_finite()) {
                return bad(format!("layer {li} has non-finite parameters"));
            }
            layers.push(Dense {
                n_in,
                n_out,
                weights,
                bias: b,
            });
        }
        Ok(AeModel {
            view: f.view,
            dims: f.dims,
            activation: f.activation,
            scaler: f.scaler,
            layers,
            train_meta: f.train_meta,
        })
    }
}

impl Serialize for AeModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ModelFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for AeModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let f = ModelFile::deserialize(d)?;
        AeModel::try_from(f).map_err(serde::de::Error::custom)
    }
}
