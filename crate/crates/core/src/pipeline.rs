//! Stage functions shared by the command-line tool and the test suites:
//! frames to features, features to profile, profile to verdicts.

use std::io::Write;

use crate::ae::{train, AeError};
use crate::codec::GooseFrame;
use crate::config::{ConfigError, RunConfig};
use crate::detector::{score, DetectError, Profile, Verdict, ViewProfile, PROFILE_VERSION};
use crate::evt::{calibrate, EvtError};
use crate::features::{assemble, raw_matrix, AssembleReport, FeatureMatrix, RowMeta, Scope, View, META_COLUMNS};
use crate::time::Timestamp;
use crate::window::{build_windows, label_windows, AttackInterval, WindowConfig, WindowError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("training input contains {count} attack-labeled rows (first at row {first}); train on normal traffic only")]
    Purity { count: usize, first: usize },
    #[error("no feature rows to train on")]
    NoRows,
    #[error("{view} model: {source}")]
    Train { view: View, source: AeError },
    #[error("{view} threshold: {source}")]
    Threshold { view: View, source: EvtError },
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Window(#[from] WindowError),
}

/// Windows, labels and assembles a capture into a feature matrix.
pub fn extract_features(frames: &[GooseFrame], labels: Option<&[AttackInterval]>, cfg: &WindowConfig, scope: Scope) -> Result<(FeatureMatrix, AssembleReport), PipelineError> {
    let mut windows = build_windows(frames, cfg);
    if let Some(l) = labels {
        label_windows(&mut windows, l)?;
    }
    Ok(assemble(raw_matrix(&windows), scope))
}

/// Rejects matrices with attack-labeled rows.
pub fn check_purity(x: &FeatureMatrix) -> Result<(), PipelineError> {
    let mut attacks = x.meta.iter().enumerate().filter(|(_, m)| m.label.is_attack());
    if let Some((first, _)) = attacks.next() {
        return Err(PipelineError::Purity {
            count: 1 + attacks.count(),
            first: first + 1,
        });
    }
    Ok(())
}

fn train_view(x: &FeatureMatrix, view: View, cfg: &RunConfig) -> Result<ViewProfile, PipelineError> {
    let rows = x.view_rows(view);
    let model = train(view, &rows, &cfg.train_config(view)).map_err(|source| PipelineError::Train { view, source })?;
    let errors = model.reconstruction_errors(&rows).map_err(|source| PipelineError::Train { view, source })?;
    let threshold = calibrate(view, &errors, &cfg.evt_config()).map_err(|source| PipelineError::Threshold { view, source })?;
    log::info!(
        "{view}: {} rows, final loss {:.3e}, u={:.4e}, xi={:.4}, sigma={:.4e}, z*={:.4e}",
        rows.len(),
        model.train_meta.as_ref().map_or(f64::NAN, |m| m.final_loss),
        threshold.u,
        threshold.xi,
        threshold.sigma,
        threshold.z_star
    );
    Ok(ViewProfile { model, threshold })
}

/// Trains the requested views on normal-only rows and calibrates their
/// thresholds on the training reconstruction errors.
pub fn train_profile(x: &FeatureMatrix, views: &[View], cfg: &RunConfig) -> Result<Profile, PipelineError> {
    cfg.validate()?;
    check_purity(x)?;
    if x.is_empty() {
        return Err(PipelineError::NoRows);
    }
    let mut p = Profile {
        version: PROFILE_VERSION,
        provenance: cfg.provenance(),
        config: cfg.clone(),
        seq: None,
        temp: None,
    };
    for &v in views {
        let vp = train_view(x, v, cfg)?;
        match v {
            View::Seq => p.seq = Some(vp),
            View::Temp => p.temp = Some(vp),
        }
    }
    if p.seq.is_none() && p.temp.is_none() {
        return Err(PipelineError::Detect(DetectError::NoModels));
    }
    Ok(p)
}

pub fn detect(profile: &Profile, x: &FeatureMatrix) -> Result<Vec<Verdict>, PipelineError> {
    Ok(score(profile, x)?)
}

/// Bottleneck coordinates of one row per trained view.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentRow {
    pub meta: RowMeta,
    pub seq: Option<Vec<f64>>,
    pub temp: Option<Vec<f64>>,
}

pub fn latent(profile: &Profile, x: &FeatureMatrix) -> Result<Vec<LatentRow>, PipelineError> {
    profile.check_schema()?;
    let mut per_view: [Option<Vec<Vec<f64>>>; 2] = [None, None];
    for (k, v) in View::BOTH.into_iter().enumerate() {
        if let Some(p) = profile.view(v) {
            per_view[k] = Some(p.model.latent(&x.view_rows(v)).map_err(DetectError::from)?);
        }
    }
    let [seq, temp] = per_view;
    Ok(x.meta
        .iter()
        .enumerate()
        .map(|(i, m)| LatentRow {
            meta: m.clone(),
            seq: seq.as_ref().map(|z| z[i].clone()),
            temp: temp.as_ref().map(|z| z[i].clone()),
        })
        .collect())
}

/// CSV with meta columns then `seq_z1..` and `temp_z1..` for trained views.
pub fn write_latent<W: Write>(mut w: W, profile: &Profile, rows: &[LatentRow], provenance: Option<&str>) -> Result<(), csv::Error> {
    if let Some(p) = provenance {
        writeln!(w, "# {p}")?;
    }
    let mut header: Vec<String> = META_COLUMNS.iter().map(|s| s.to_string()).collect();
    for v in View::BOTH {
        if let Some(p) = profile.view(v) {
            header.extend((1..=p.model.latent_dim()).map(|i| format!("{v}_z{i}")));
        }
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.meta.flow.to_string(),
            r.meta.t_start.to_string(),
            Timestamp::from_micros(r.meta.t_w_us).to_string(),
            r.meta.label.to_string(),
        ];
        for z in [&r.seq, &r.temp].into_iter().flatten() {
            rec.extend(z.iter().map(|v| v.to_string()));
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
