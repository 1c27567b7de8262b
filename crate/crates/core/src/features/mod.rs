//! Per-window temporal and sequence features.
//!
//! The 14 features are split into two disjoint views. Column order is fixed
//! by [`FEATURES`] and is the on-disk order of every feature matrix.

mod io;
mod matrix;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::window::FlowWindow;

pub use io::{header as matrix_header, read_matrix, write_matrix, write_sidecar, MatrixFileError, Sidecar, SidecarColumn, META_COLUMNS};
pub use matrix::{assemble, raw_matrix, AssembleReport, FeatureMatrix, RawMatrix, RowMeta, Scope};

/// Lower clamp on inter-arrival times when computing rates (1 µs).
pub const MIN_DT: f64 = 1e-6;
/// Population variance below which a training column is degenerate.
pub const DEGENERATE_VAR: f64 = 1e-12;

pub const N_FEATURES: usize = 14;
pub const N_TEMP: usize = 8;
pub const N_SEQ: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Seq,
    Temp,
}

impl View {
    pub const BOTH: [View; 2] = [View::Seq, View::Temp];

    /// Column indices of this view in registry order.
    pub fn columns(self) -> &'static [usize] {
        match self {
            View::Temp => &[0, 1, 2, 3, 4, 5, 6, 7],
            View::Seq => &[8, 9, 10, 11, 12, 13],
        }
    }

    pub fn width(self) -> usize {
        self.columns().len()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            View::Seq => "seq",
            View::Temp => "temp",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seq" => Ok(View::Seq),
            "temp" => Ok(View::Temp),
            _ => Err(format!("unknown view `{s}` (expected seq or temp)")),
        }
    }
}

/// How missing values are filled during assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillPolicy {
    /// Linear interpolation over neighbouring windows of the same flow.
    Interpolate,
    /// Event-based quantity: absent means zero.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureSpec {
    pub name: &'static str,
    pub view: View,
    pub fill: FillPolicy,
}

const fn spec(name: &'static str, view: View, fill: FillPolicy) -> FeatureSpec {
    FeatureSpec { name, view, fill }
}

pub const FEATURES: [FeatureSpec; N_FEATURES] = [
    spec("dt_mean", View::Temp, FillPolicy::Interpolate),
    spec("dt_std", View::Temp, FillPolicy::Interpolate),
    spec("rate_mean", View::Temp, FillPolicy::Interpolate),
    spec("pkt_count", View::Temp, FillPolicy::Interpolate),
    spec("jitter_mean", View::Temp, FillPolicy::Interpolate),
    spec("jitter_std", View::Temp, FillPolicy::Interpolate),
    spec("len_mean", View::Temp, FillPolicy::Interpolate),
    spec("ttl_mean", View::Temp, FillPolicy::Interpolate),
    spec("st_changes", View::Seq, FillPolicy::Zero),
    spec("sq_resets", View::Seq, FillPolicy::Zero),
    spec("sq_bigjump", View::Seq, FillPolicy::Zero),
    spec("sq_progress", View::Seq, FillPolicy::Zero),
    spec("st_jump_size_max", View::Seq, FillPolicy::Zero),
    spec("bad_dst_rate", View::Seq, FillPolicy::Zero),
];

pub fn feature_names() -> impl Iterator<Item = &'static str> {
    FEATURES.iter().map(|f| f.name)
}

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURES.iter().position(|f| f.name == name)
}

/// One window's features; `None` marks a missing value.
pub type RawFeatures = [Option<f64>; N_FEATURES];

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Population standard deviation; 0 for a single sample.
fn pop_std(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    Some(var.sqrt())
}

/// Temporal view, in registry order.
pub fn extract_temporal(w: &FlowWindow) -> [Option<f64>; N_TEMP] {
    let rates: Vec<f64> = w.dt_series.iter().map(|&dt| 1.0 / dt.max(MIN_DT)).collect();
    let (lens, ttls): (Vec<f64>, Vec<f64>) = w
        .frames
        .iter()
        .map(|f| (f64::from(f.frame_len), f64::from(f.ttl_ms)))
        .unzip();
    [
        mean(&w.dt_series),
        pop_std(&w.dt_series),
        mean(&rates),
        Some(w.frames.len() as f64),
        mean(&w.jitter_series),
        pop_std(&w.jitter_series),
        mean(&lens),
        mean(&ttls),
    ]
}

/// Sequence view, in registry order. Counter pairs are taken within the
/// window only; sqNum decreases or jumps coinciding with an stNum change are
/// legitimate restarts and are not counted.
pub fn extract_sequence(w: &FlowWindow) -> [Option<f64>; N_SEQ] {
    let mut st_changes = 0u64;
    let mut sq_resets = 0u64;
    let mut sq_bigjump = 0u64;
    let mut st_jump_max = 0i64;
    for pair in w.frames.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let st_delta = i64::from(b.st_num) - i64::from(a.st_num);
        let sq_delta = i64::from(b.sq_num) - i64::from(a.sq_num);
        if st_delta > 0 {
            st_changes += 1;
        }
        st_jump_max = st_jump_max.max(st_delta);
        if st_delta == 0 {
            if sq_delta < 0 {
                sq_resets += 1;
            } else if sq_delta > 1 {
                sq_bigjump += 1;
            }
        }
    }
    let sq_progress = match (
        w.frames.iter().map(|f| f.sq_num).max(),
        w.frames.iter().map(|f| f.sq_num).min(),
    ) {
        (Some(hi), Some(lo)) => f64::from(hi - lo),
        _ => 0.0,
    };
    let bad_dst = if w.frames.is_empty() {
        None
    } else {
        let bad = w.frames.iter().filter(|f| !f.dst_mac.is_multicast()).count();
        Some(bad as f64 / w.frames.len() as f64)
    };
    [
        Some(st_changes as f64),
        Some(sq_resets as f64),
        Some(sq_bigjump as f64),
        Some(sq_progress),
        Some(st_jump_max as f64),
        bad_dst,
    ]
}

/// Both views concatenated in registry order.
pub fn extract(w: &FlowWindow) -> RawFeatures {
    let mut out = [None; N_FEATURES];
    out[..N_TEMP].copy_from_slice(&extract_temporal(w));
    out[N_TEMP..].copy_from_slice(&extract_sequence(w));
    out
}
