use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{extract, FillPolicy, RawFeatures, View, DEGENERATE_VAR, FEATURES, N_FEATURES};
use crate::time::Timestamp;
use crate::window::{FlowKey, FlowWindow, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Train,
    Infer,
}

/// Identifiers kept alongside (not inside) the numeric matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowMeta {
    pub flow: FlowKey,
    pub t_start: Timestamp,
    pub t_w_us: i64,
    pub label: Label,
}

impl RowMeta {
    pub fn t_end(&self) -> Timestamp {
        self.t_start.add_micros(self.t_w_us)
    }
}

/// Extracted features before missing-value handling.
#[derive(Debug, Clone, Default)]
pub struct RawMatrix {
    pub meta: Vec<RowMeta>,
    pub values: Vec<RawFeatures>,
}

pub fn raw_matrix(windows: &[FlowWindow]) -> RawMatrix {
    let mut raw = RawMatrix::default();
    for w in windows {
        raw.meta.push(RowMeta {
            flow: w.key.clone(),
            t_start: w.t_start,
            t_w_us: w.t_w_us,
            label: w.label,
        });
        raw.values.push(extract(w));
    }
    raw
}

/// Dense, fully populated feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub meta: Vec<RowMeta>,
    pub rows: Vec<[f64; N_FEATURES]>,
    /// Columns that were constant on the training data.
    pub degenerate: [bool; N_FEATURES],
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows restricted to one view's columns.
    pub fn view_rows(&self, view: View) -> Vec<Vec<f64>> {
        let cols = view.columns();
        self.rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Flags columns with population variance below [`DEGENERATE_VAR`].
    pub fn flag_degenerate(&mut self) {
        for j in 0..N_FEATURES {
            self.degenerate[j] = population_variance(self.rows.iter().map(|r| r[j])) < DEGENERATE_VAR;
        }
    }
}

pub(crate) fn population_variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count();
    if n == 0 {
        return 0.0;
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssembleReport {
    pub rows_in: usize,
    pub rows_removed: usize,
    pub interpolated: usize,
    pub zero_filled: usize,
    /// Continuous values with no observation anywhere in their flow (set to 0).
    pub unanchored: usize,
}

/// Linear interpolation at `t` over known `(t, v)` points sorted by `t`;
/// nearest value outside the observed range.
fn interpolate(points: &[(f64, f64)], t: f64) -> f64 {
    let i = points.partition_point(|&(pt, _)| pt < t);
    if i == 0 {
        return points[0].1;
    }
    if i == points.len() {
        return points[points.len() - 1].1;
    }
    let (t0, v0) = points[i - 1];
    let (t1, v1) = points[i];
    if t1 == t0 {
        return v0;
    }
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

/// Turns raw extracted features into a dense matrix: drops rows with no
/// observed feature, interpolates continuous gaps per flow, zero-fills
/// event features and (at train scope) flags constant columns.
pub fn assemble(raw: RawMatrix, scope: Scope) -> (FeatureMatrix, AssembleReport) {
    let mut report = AssembleReport {
        rows_in: raw.values.len(),
        ..Default::default()
    };

    let (meta, values): (Vec<_>, Vec<_>) = raw
        .meta
        .into_iter()
        .zip(raw.values)
        .filter(|(_, v)| v.iter().any(Option::is_some))
        .unzip();
    report.rows_removed = report.rows_in - meta.len();

    let mut rows: Vec<[f64; N_FEATURES]> = values
        .iter()
        .map(|v| std::array::from_fn(|j| v[j].unwrap_or(0.0)))
        .collect();

    let mut by_flow: BTreeMap<&FlowKey, Vec<usize>> = BTreeMap::new();
    for (i, m) in meta.iter().enumerate() {
        by_flow.entry(&m.flow).or_default().push(i);
    }

    for (j, spec) in FEATURES.iter().enumerate() {
        match spec.fill {
            FillPolicy::Zero => {
                report.zero_filled += values.iter().filter(|v| v[j].is_none()).count();
            }
            FillPolicy::Interpolate => {
                for idx in by_flow.values() {
                    let mut order = idx.clone();
                    order.sort_by_key(|&i| meta[i].t_start);
                    let points: Vec<(f64, f64)> = order
                        .iter()
                        .filter_map(|&i| values[i][j].map(|v| (meta[i].t_start.as_secs_f64(), v)))
                        .collect();
                    for &i in order.iter().filter(|&&i| values[i][j].is_none()) {
                        if points.is_empty() {
                            report.unanchored += 1;
                            rows[i][j] = 0.0;
                        } else {
                            report.interpolated += 1;
                            rows[i][j] = interpolate(&points, meta[i].t_start.as_secs_f64());
                        }
                    }
                }
            }
        }
    }

    let mut m = FeatureMatrix {
        meta,
        rows,
        degenerate: [false; N_FEATURES],
    };
    if scope == Scope::Train {
        m.flag_degenerate();
    }
    (m, report)
}
