//! CSV persistence of feature matrices plus the JSON sidecar.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, RowMeta, Scope, View, FEATURES, N_FEATURES};
use crate::time::Timestamp;

pub const META_COLUMNS: [&str; 4] = ["flow", "t_start", "t_w", "label"];
pub const SIDECAR_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum MatrixFileError {
    #[error("feature CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("feature CSV: {0}")]
    Io(#[from] std::io::Error),
    #[error("feature CSV header mismatch: expected `{expected}`, found `{found}`")]
    Schema { expected: String, found: String },
    #[error("feature CSV row {row}, column `{column}`: {msg}")]
    Value { row: usize, column: String, msg: String },
}

pub fn header() -> Vec<&'static str> {
    META_COLUMNS.iter().copied().chain(FEATURES.iter().map(|f| f.name)).collect()
}

/// Writes the matrix; `provenance` becomes a leading `#` comment line.
pub fn write_matrix<W: Write>(mut w: W, m: &FeatureMatrix, provenance: Option<&str>) -> Result<(), MatrixFileError> {
    if let Some(p) = provenance {
        writeln!(w, "# {p}")?;
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header())?;
    let mut rec: Vec<String> = Vec::with_capacity(4 + N_FEATURES);
    for (meta, row) in m.meta.iter().zip(&m.rows) {
        rec.clear();
        rec.push(meta.flow.to_string());
        rec.push(meta.t_start.to_string());
        rec.push(Timestamp::from_micros(meta.t_w_us).to_string());
        rec.push(meta.label.to_string());
        rec.extend(row.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_matrix<R: Read>(r: R) -> Result<FeatureMatrix, MatrixFileError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let expected = header();
    if found != expected {
        return Err(MatrixFileError::Schema {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    let mut m = FeatureMatrix {
        meta: Vec::new(),
        rows: Vec::new(),
        degenerate: [false; N_FEATURES],
    };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |col: usize, msg: String| MatrixFileError::Value {
            row: i + 1,
            column: expected[col].to_string(),
            msg,
        };
        let meta = RowMeta {
            flow: rec[0].parse().map_err(|e| bad(0, format!("{e}")))?,
            t_start: rec[1].parse().map_err(|e| bad(1, format!("{e}")))?,
            t_w_us: rec[2].parse::<Timestamp>().map_err(|e| bad(2, format!("{e}")))?.micros(),
            label: rec[3].parse().map_err(|e| bad(3, format!("{e}")))?,
        };
        let mut row = [0.0; N_FEATURES];
        for (j, slot) in row.iter_mut().enumerate() {
            let col = 4 + j;
            let v: f64 = rec[col].parse().map_err(|e| bad(col, format!("{e}")))?;
            if !v.is_finite() {
                return Err(bad(col, "non-finite value".into()));
            }
            *slot = v;
        }
        m.meta.push(meta);
        m.rows.push(row);
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarColumn {
    pub name: String,
    pub view: View,
    pub degenerate: bool,
}

/// Column registry and degenerate flags accompanying a feature CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: u32,
    pub provenance: String,
    pub scope: Scope,
    pub rows: usize,
    pub columns: Vec<SidecarColumn>,
}

impl Sidecar {
    pub fn for_matrix(m: &FeatureMatrix, scope: Scope, provenance: &str) -> Self {
        Sidecar {
            version: SIDECAR_VERSION,
            provenance: provenance.to_string(),
            scope,
            rows: m.len(),
            columns: FEATURES
                .iter()
                .zip(m.degenerate)
                .map(|(f, degenerate)| SidecarColumn {
                    name: f.name.to_string(),
                    view: f.view,
                    degenerate,
                })
                .collect(),
        }
    }
}

pub fn write_sidecar<W: Write>(w: W, sidecar: &Sidecar) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(w, sidecar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::MacAddr;
    use crate::window::{AttackKind, FlowKey, Label};

    fn sample() -> FeatureMatrix {
        let mut rows = Vec::new();
        let mut meta = Vec::new();
        for i in 0..3 {
            let mut r = [0.0; N_FEATURES];
            for (j, v) in r.iter_mut().enumerate() {
                *v = (i * N_FEATURES + j) as f64 / 7.0;
            }
            rows.push(r);
            meta.push(RowMeta {
                flow: FlowKey {
                    goose_id: "IED1/LLN0$GO$g".into(),
                    src_mac: MacAddr([0, 1, 2, 3, 4, 5]),
                },
                t_start: Timestamp::from_micros(1_700_000_000_500_000 + i as i64 * 500_000),
                t_w_us: 500_000,
                label: if i == 1 { Label::Attack(AttackKind::Dm) } else { Label::Normal },
            });
        }
        FeatureMatrix {
            meta,
            rows,
            degenerate: [false; N_FEATURES],
        }
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let m = sample();
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m, Some("goosewatch test")).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# goosewatch test"));
        assert_eq!(lines.next().unwrap().split(',').count(), 18);
        assert_eq!(read_matrix(&buf[..]).unwrap(), m);
    }

    #[test]
    fn header_mismatch_is_schema_error() {
        let csv = "flow,t_start,t_w,label,dt_mean\n";
        assert!(matches!(read_matrix(csv.as_bytes()), Err(MatrixFileError::Schema { .. })));
    }

    #[test]
    fn sidecar_lists_views() {
        let mut m = sample();
        m.degenerate[9] = true;
        let s = Sidecar::for_matrix(&m, Scope::Train, "test");
        assert_eq!(s.columns.len(), 14);
        assert_eq!(s.columns[9].name, "sq_resets");
        assert!(s.columns[9].degenerate);
        assert_eq!(s.columns[0].view, View::Temp);
        assert_eq!(s.columns[13].view, View::Seq);
    }
}
