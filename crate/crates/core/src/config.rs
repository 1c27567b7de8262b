//! Run configuration shared by every pipeline stage, and the provenance
//! string stamped into each output file.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ae::{default_dims, validate_dims, TrainConfig};
use crate::evt::EvtConfig;
use crate::features::View;
use crate::window::WindowConfig;

pub const TOOL_NAME: &str = "goosewatch";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, thiserror::Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Window length in seconds.
    pub t_w: f64,
    /// Window stride in seconds; `None` means tumbling windows.
    pub stride: Option<f64>,
    pub seq_dims: Vec<usize>,
    pub temp_dims: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub val_frac: f64,
    pub patience: usize,
    pub u_quantile: f64,
    pub q: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            t_w: 1.0,
            stride: None,
            seq_dims: default_dims(View::Seq),
            temp_dims: default_dims(View::Temp),
            learning_rate: 1e-3,
            epochs: 500,
            batch_size: 64,
            val_frac: 0.1,
            patience: 20,
            u_quantile: 0.98,
            q: 1e-3,
            seed: DEFAULT_SEED,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.window_config()?;
        for view in View::BOTH {
            let dims = self.dims(view);
            validate_dims(dims).map_err(|e| ConfigError(format!("{view} dims: {e}")))?;
            if dims[0] != view.width() {
                return Err(ConfigError(format!(
                    "{view} dims must start and end with {} (the view width), got {dims:?}",
                    view.width()
                )));
            }
            self.train_config(view).validate().map_err(|e| ConfigError(e.to_string()))?;
        }
        self.evt_config().validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(())
    }

    pub fn window_config(&self) -> Result<WindowConfig, ConfigError> {
        WindowConfig::new(self.t_w, self.stride).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn dims(&self, view: View) -> &[usize] {
        match view {
            View::Seq => &self.seq_dims,
            View::Temp => &self.temp_dims,
        }
    }

    /// Per-view seed: the two models never share a random stream.
    pub fn view_seed(&self, view: View) -> u64 {
        match view {
            View::Seq => self.seed,
            View::Temp => self.seed.wrapping_add(1),
        }
    }

    pub fn train_config(&self, view: View) -> TrainConfig {
        TrainConfig {
            dims: self.dims(view).to_vec(),
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.view_seed(view),
            val_frac: self.val_frac,
            patience: self.patience,
        }
    }

    pub fn evt_config(&self) -> EvtConfig {
        EvtConfig {
            q: self.q,
            u_quantile: self.u_quantile,
        }
    }

    /// SHA-256 over the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// One-line provenance header: tool, version and configuration hash.
    pub fn provenance(&self) -> String {
        format!("{TOOL_NAME} {TOOL_VERSION} config-sha256={}", self.hash())
    }
}
