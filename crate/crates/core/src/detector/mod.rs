//! Dual-view scoring, per-feature attribution and label-based evaluation.

mod eval;
mod io;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::ae::{AeError, AeModel};
use crate::config::RunConfig;
use crate::evt::EvtThreshold;
use crate::features::{FeatureMatrix, RowMeta, View, N_FEATURES};

pub use eval::{evaluate, evaluate_all, interval_detection, Counts, Decider, EvalReport, EvalRow, IntervalOutcome, Positive};
pub use io::{read_verdicts, write_attributions, write_report, write_table, write_verdicts, VerdictFileError};

pub const PROFILE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("profile contains no trained view")]
    NoModels,
    #[error(transparent)]
    Model(#[from] AeError),
    #[error("profile file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported profile version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewProfile {
    pub model: AeModel,
    pub threshold: EvtThreshold,
}

/// Trained models and thresholds for both views, plus the run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub version: u32,
    pub provenance: String,
    pub config: RunConfig,
    pub seq: Option<ViewProfile>,
    pub temp: Option<ViewProfile>,
}

impl Profile {
    pub fn view(&self, v: View) -> Option<&ViewProfile> {
        match v {
            View::Seq => self.seq.as_ref(),
            View::Temp => self.temp.as_ref(),
        }
    }

    /// Checks every model against the fixed feature layout.
    pub fn check_schema(&self) -> Result<(), DetectError> {
        if self.seq.is_none() && self.temp.is_none() {
            return Err(DetectError::NoModels);
        }
        for v in View::BOTH {
            if let Some(p) = self.view(v) {
                if p.model.view != v || p.threshold.view != v {
                    return Err(DetectError::SchemaMismatch(format!("{v} slot holds a {} model", p.model.view)));
                }
                if p.model.input_dim() != v.width() || p.model.scaler.dim() != v.width() {
                    return Err(DetectError::SchemaMismatch(format!(
                        "{v} model expects {} features, the {v} view has {}",
                        p.model.input_dim(),
                        v.width()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, w: W) -> Result<(), DetectError> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self, DetectError> {
        let p: Profile = serde_json::from_reader(r)?;
        if p.version != PROFILE_VERSION {
            return Err(DetectError::Version(p.version));
        }
        p.check_schema()?;
        Ok(p)
    }
}

/// Per-feature squared reconstruction errors and their within-view shares.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    pub contributions: [f64; N_FEATURES],
    pub shares: [f64; N_FEATURES],
}

impl Attribution {
    /// Column index of the largest contribution within `view` (first on ties).
    pub fn top(&self, view: View) -> usize {
        let cols = view.columns();
        cols.iter()
            .copied()
            .fold(cols[0], |best, j| if self.contributions[j] > self.contributions[best] { j } else { best })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub meta: RowMeta,
    pub e_seq: Option<f64>,
    pub e_temp: Option<f64>,
    pub over_seq: bool,
    pub over_temp: bool,
    pub anomalous: bool,
    /// Present for freshly scored rows; absent when read back from CSV.
    pub attribution: Option<Attribution>,
}

impl Verdict {
    pub fn error(&self, v: View) -> Option<f64> {
        match v {
            View::Seq => self.e_seq,
            View::Temp => self.e_temp,
        }
    }

    pub fn over(&self, v: View) -> bool {
        match v {
            View::Seq => self.over_seq,
            View::Temp => self.over_temp,
        }
    }
}

/// Scores every row: per-view reconstruction error, threshold test, OR
/// fusion and attribution. Views missing from the profile never fire.
pub fn score(profile: &Profile, x: &FeatureMatrix) -> Result<Vec<Verdict>, DetectError> {
    profile.check_schema()?;
    let mut out = Vec::with_capacity(x.len());
    for (meta, row) in x.meta.iter().zip(&x.rows) {
        let mut contributions = [0.0; N_FEATURES];
        let mut shares = [0.0; N_FEATURES];
        let mut errors = [None, None];
        let mut over = [false, false];
        for (k, v) in View::BOTH.into_iter().enumerate() {
            let Some(p) = profile.view(v) else { continue };
            let cols = v.columns();
            let raw: Vec<f64> = cols.iter().map(|&c| row[c]).collect();
            let (xs, x_hat) = p.model.reconstruct(&raw)?;
            let mut total = 0.0;
            for ((&c, a), b) in cols.iter().zip(&xs).zip(&x_hat) {
                contributions[c] = (a - b) * (a - b);
                total += contributions[c];
            }
            if total > 0.0 {
                for &c in cols {
                    shares[c] = contributions[c] / total;
                }
            }
            let e = total / cols.len() as f64;
            errors[k] = Some(e);
            over[k] = e > p.threshold.z_star;
        }
        out.push(Verdict {
            meta: meta.clone(),
            e_seq: errors[0],
            e_temp: errors[1],
            over_seq: over[0],
            over_temp: over[1],
            anomalous: over[0] || over[1],
            attribution: Some(Attribution { contributions, shares }),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ae::{Activation, Dense, Scaler};
    use crate::codec::MacAddr;
    use crate::evt::FitMethod;
    use crate::time::Timestamp;
    use crate::window::{FlowKey, Label};

    /// Model whose output is constant zero in scaled space (all-zero weights),
    /// so the error is the mean square of the scaled input.
    fn zero_model(v: View) -> AeModel {
        let d = v.width();
        let dims = vec![d, 2, d];
        AeModel {
            view: v,
            layers: dims.windows(2).map(|p| Dense::zeros(p[0], p[1])).collect(),
            dims,
            activation: Activation::Tanh,
            scaler: Scaler {
                means: vec![0.0; d],
                stds: vec![1.0; d],
                degenerate: vec![false; d],
            },
            train_meta: None,
        }
    }

    fn threshold(v: View, z: f64) -> EvtThreshold {
        EvtThreshold {
            view: v,
            u: z,
            xi: 0.0,
            sigma: 1.0,
            method: FitMethod::Mle,
            n: 1000,
            n_u: 20,
            q: 1e-3,
            u_quantile: 0.98,
            z_star: z,
        }
    }

    fn profile(z_seq: f64, z_temp: f64) -> Profile {
        Profile {
            version: PROFILE_VERSION,
            provenance: "test".into(),
            config: RunConfig::default(),
            seq: Some(ViewProfile {
                model: zero_model(View::Seq),
                threshold: threshold(View::Seq, z_seq),
            }),
            temp: Some(ViewProfile {
                model: zero_model(View::Temp),
                threshold: threshold(View::Temp, z_temp),
            }),
        }
    }

    fn matrix(rows: Vec<[f64; N_FEATURES]>) -> FeatureMatrix {
        FeatureMatrix {
            meta: (0..rows.len())
                .map(|i| RowMeta {
                    flow: FlowKey {
                        goose_id: "g".into(),
                        src_mac: MacAddr::default(),
                    },
                    t_start: Timestamp::from_micros(i as i64 * 1_000_000),
                    t_w_us: 1_000_000,
                    label: Label::Normal,
                })
                .collect(),
            rows,
            degenerate: [false; N_FEATURES],
        }
    }

    #[test]
    fn or_fusion() {
        let mut r = [0.0; N_FEATURES];
        r[12] = 6.0; // st_jump_size_max: e_seq = 36 / 6 = 6
        r[0] = 2.0; // dt_mean: e_temp = 4 / 8 = 0.5
        let x = matrix(vec![r, [0.0; N_FEATURES]]);
        let v = score(&profile(5.0, 1.0), &x).unwrap();
        assert_eq!(v[0].e_seq, Some(6.0));
        assert_eq!(v[0].e_temp, Some(0.5));
        assert!(v[0].over_seq && !v[0].over_temp && v[0].anomalous);
        assert!(!v[1].anomalous);
        let a = v[0].attribution.as_ref().unwrap();
        assert_eq!(a.top(View::Seq), 12);
        assert_eq!(a.shares[12], 1.0);
        assert_eq!(a.shares[0], 1.0);
        // 0/0 shares on an all-zero row.
        assert!(v[1].attribution.as_ref().unwrap().shares.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn attribution_sums_to_scaled_error() {
        let rows: Vec<[f64; N_FEATURES]> = (0..50).map(|i| std::array::from_fn(|j| ((i * 14 + j) as f64).sin() * 3.0)).collect();
        for v in score(&profile(1.0, 1.0), &matrix(rows)).unwrap() {
            let a = v.attribution.clone().unwrap();
            for view in View::BOTH {
                let sum: f64 = view.columns().iter().map(|&c| a.contributions[c]).sum();
                let e = v.error(view).unwrap();
                assert!((sum - view.width() as f64 * e).abs() <= 1e-9 * sum.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn raising_threshold_never_adds_alarms() {
        let rows: Vec<[f64; N_FEATURES]> = (0..40).map(|i| std::array::from_fn(|j| ((i + j) as f64).cos())).collect();
        let x = matrix(rows);
        let lo = score(&profile(0.3, 0.3), &x).unwrap();
        let hi = score(&profile(0.6, 0.4), &x).unwrap();
        for (a, b) in lo.iter().zip(&hi) {
            assert!(a.anomalous || !b.anomalous);
        }
    }

    #[test]
    fn missing_view_never_fires() {
        let mut p = profile(0.0, 0.0);
        p.temp = None;
        let mut r = [0.0; N_FEATURES];
        r[0] = 100.0;
        let v = score(&p, &matrix(vec![r])).unwrap();
        assert_eq!(v[0].e_temp, None);
        assert!(!v[0].over_temp && !v[0].anomalous);
    }

    #[test]
    fn schema_checks() {
        let mut p = profile(1.0, 1.0);
        p.seq.as_mut().unwrap().model = zero_model(View::Temp);
        assert!(matches!(score(&p, &matrix(vec![])), Err(DetectError::SchemaMismatch(_))));
        let mut p = profile(1.0, 1.0);
        p.seq = None;
        p.temp = None;
        assert!(matches!(p.check_schema(), Err(DetectError::NoModels)));
    }

    #[test]
    fn profile_roundtrip() {
        let p = profile(1.5, 2.5);
        let mut buf = Vec::new();
        p.write(&mut buf).unwrap();
        assert_eq!(Profile::read(&buf[..]).unwrap(), p);
        let text = String::from_utf8(buf).unwrap().replace("\"version\": 1,\n  \"provenance\"", "\"version\": 7,\n  \"provenance\"");
        assert!(matches!(Profile::read(text.as_bytes()), Err(DetectError::Version(7))));
    }
}
