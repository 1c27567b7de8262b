use std::io::{Read, Write};

use super::{EvalReport, Verdict};
use crate::features::{RowMeta, FEATURES, META_COLUMNS};
use crate::time::Timestamp;

pub const VERDICT_COLUMNS: [&str; 5] = ["e_seq", "e_temp", "over_seq", "over_temp", "anomalous"];
pub const REPORT_COLUMNS: [&str; 12] = [
    "kind",
    "model",
    "tp",
    "fp",
    "tn",
    "fn",
    "recall",
    "specificity",
    "precision",
    "f1",
    "fp_share",
    "no_positives",
];

#[derive(Debug, thiserror::Error)]
pub enum VerdictFileError {
    #[error("verdict CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("verdict CSV: {0}")]
    Io(#[from] std::io::Error),
    #[error("verdict CSV header mismatch: expected `{expected}`, found `{found}`")]
    Schema { expected: String, found: String },
    #[error("verdict CSV row {row}, column `{column}`: {msg}")]
    Value { row: usize, column: String, msg: String },
    #[error("verdict has no attribution (scores read from file cannot be attributed)")]
    NoAttribution,
}

fn meta_fields(m: &RowMeta) -> [String; 4] {
    [
        m.flow.to_string(),
        m.t_start.to_string(),
        Timestamp::from_micros(m.t_w_us).to_string(),
        m.label.to_string(),
    ]
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn provenance_line<W: Write>(w: &mut W, provenance: Option<&str>) -> std::io::Result<()> {
    match provenance {
        Some(p) => writeln!(w, "# {p}"),
        None => Ok(()),
    }
}

fn verdict_header() -> Vec<&'static str> {
    META_COLUMNS.iter().chain(&VERDICT_COLUMNS).copied().collect()
}

pub fn write_verdicts<W: Write>(mut w: W, verdicts: &[Verdict], provenance: Option<&str>) -> Result<(), VerdictFileError> {
    provenance_line(&mut w, provenance)?;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(verdict_header())?;
    for v in verdicts {
        let mut rec: Vec<String> = meta_fields(&v.meta).into();
        rec.extend([
            opt(v.e_seq),
            opt(v.e_temp),
            v.over_seq.to_string(),
            v.over_temp.to_string(),
            v.anomalous.to_string(),
        ]);
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_verdicts<R: Read>(r: R) -> Result<Vec<Verdict>, VerdictFileError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let expected = verdict_header();
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != expected {
        return Err(VerdictFileError::Schema {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |col: usize, msg: String| VerdictFileError::Value {
            row: i + 1,
            column: expected[col].to_string(),
            msg,
        };
        let float = |col: usize| -> Result<Option<f64>, VerdictFileError> {
            if rec[col].is_empty() {
                return Ok(None);
            }
            let v: f64 = rec[col].parse().map_err(|e| bad(col, format!("{e}")))?;
            if v.is_finite() {
                Ok(Some(v))
            } else {
                Err(bad(col, "non-finite value".into()))
            }
        };
        let flag = |col: usize| -> Result<bool, VerdictFileError> {
            match &rec[col] {
                "true" | "1" => Ok(true),
                "false" | "0" => Ok(false),
                other => Err(bad(col, format!("expected true/false, found `{other}`"))),
            }
        };
        out.push(Verdict {
            meta: RowMeta {
                flow: rec[0].parse().map_err(|e| bad(0, format!("{e}")))?,
                t_start: rec[1].parse().map_err(|e| bad(1, format!("{e}")))?,
                t_w_us: rec[2].parse::<Timestamp>().map_err(|e| bad(2, format!("{e}")))?.micros(),
                label: rec[3].parse().map_err(|e| bad(3, format!("{e}")))?,
            },
            e_seq: float(4)?,
            e_temp: float(5)?,
            over_seq: flag(6)?,
            over_temp: flag(7)?,
            anomalous: flag(8)?,
            attribution: None,
        });
    }
    Ok(out)
}

/// One row per window, one column per feature: squared scaled errors.
/// Columns of a view missing from the profile are left empty.
pub fn write_attributions<W: Write>(mut w: W, verdicts: &[Verdict], provenance: Option<&str>) -> Result<(), VerdictFileError> {
    provenance_line(&mut w, provenance)?;
    let mut wtr = csv::Writer::from_writer(w);
    let header: Vec<&str> = META_COLUMNS.iter().copied().chain(FEATURES.iter().map(|f| f.name)).collect();
    wtr.write_record(&header)?;
    for v in verdicts {
        let a = v.attribution.as_ref().ok_or(VerdictFileError::NoAttribution)?;
        let mut rec: Vec<String> = meta_fields(&v.meta).into();
        for (j, f) in FEATURES.iter().enumerate() {
            rec.push(if v.error(f.view).is_some() {
                a.contributions[j].to_string()
            } else {
                String::new()
            });
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_report<W: Write>(mut w: W, report: &EvalReport, provenance: Option<&str>) -> Result<(), VerdictFileError> {
    provenance_line(&mut w, provenance)?;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(REPORT_COLUMNS)?;
    for r in &report.rows {
        let c = r.counts;
        wtr.write_record([
            r.positive.to_string(),
            r.decider.to_string(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.tn.to_string(),
            c.fn_.to_string(),
            r.recall.to_string(),
            r.specificity.to_string(),
            r.precision.to_string(),
            r.f1.to_string(),
            r.fp_share.to_string(),
            r.no_positives.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Human-readable report with metrics to five decimals.
pub fn write_table<W: Write>(mut w: W, report: &EvalReport) -> std::io::Result<()> {
    writeln!(
        w,
        "{:<5} {:<6} {:>8} {:>8} {:>9} {:>8} {:>8} {:>8} {:>9} {:>8}",
        "kind", "model", "TP", "FP", "TN", "FN", "recall", "spec", "precision", "F1"
    )?;
    for r in &report.rows {
        let c = r.counts;
        let recall = if r.no_positives { "n/a".to_string() } else { format!("{:.5}", r.recall) };
        writeln!(
            w,
            "{:<5} {:<6} {:>8} {:>8} {:>9} {:>8} {:>8} {:>8.5} {:>9.5} {:>8.5}",
            r.positive.to_string(),
            r.decider.as_str(),
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            recall,
            r.specificity,
            r.precision,
            r.f1
        )?;
    }
    for r in report.rows.iter().filter(|r| r.no_positives && r.decider == super::Decider::Fused) {
        writeln!(w, "note: no {} windows in input; recall undefined", r.positive)?;
    }
    writeln!(
        w,
        "fused false positives: {} of {} windows ({:.3}% of all windows, {:.3}% of {} normal windows)",
        report.fused_fp,
        report.windows,
        100.0 * report.fused_fp_share,
        100.0 * report.fused_fp_rate,
        report.normal_windows
    )
}

#[cfg(test)]
mod tests {
    use super::super::{evaluate_all, Attribution};
    use super::*;
    use crate::codec::MacAddr;
    use crate::features::N_FEATURES;
    use crate::window::{AttackKind, FlowKey, Label};

    fn sample() -> Vec<Verdict> {
        (0..4)
            .map(|i| Verdict {
                meta: RowMeta {
                    flow: FlowKey {
                        goose_id: "LD/LLN0$GO$a".into(),
                        src_mac: MacAddr([0, 0x1a, 0, 0, 0, i as u8]),
                    },
                    t_start: Timestamp::from_micros(1_000_000 * i),
                    t_w_us: 500_000,
                    label: if i == 2 { Label::Attack(AttackKind::Ms) } else { Label::Normal },
                },
                e_seq: Some(0.1 * i as f64),
                e_temp: if i == 3 { None } else { Some(1.0 / 3.0) },
                over_seq: i == 2,
                over_temp: false,
                anomalous: i == 2,
                attribution: Some(Attribution {
                    contributions: [0.25; N_FEATURES],
                    shares: [0.0; N_FEATURES],
                }),
            })
            .collect()
    }

    #[test]
    fn verdict_roundtrip() {
        let v = sample();
        let mut buf = Vec::new();
        write_verdicts(&mut buf, &v, Some("prov")).unwrap();
        let back = read_verdicts(&buf[..]).unwrap();
        let stripped: Vec<Verdict> = v.into_iter().map(|x| Verdict { attribution: None, ..x }).collect();
        assert_eq!(back, stripped);
    }

    #[test]
    fn verdict_schema_error() {
        assert!(matches!(read_verdicts("a,b\n".as_bytes()), Err(VerdictFileError::Schema { .. })));
        let bad = "flow,t_start,t_w,label,e_seq,e_temp,over_seq,over_temp,anomalous\ng@00:00:00:00:00:00,1.0,1.0,normal,1,1,maybe,false,false\n";
        assert!(matches!(read_verdicts(bad.as_bytes()), Err(VerdictFileError::Value { .. })));
    }

    #[test]
    fn attribution_csv_layout() {
        let mut buf = Vec::new();
        write_attributions(&mut buf, &sample(), None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0].split(',').count(), 18);
        // Row 3 has no temp score: temp columns empty, seq columns filled.
        let cells: Vec<&str> = lines[4].split(',').collect();
        assert!(cells[4..12].iter().all(|c| c.is_empty()));
        assert!(cells[12..].iter().all(|c| *c == "0.25"));
    }

    #[test]
    fn report_outputs() {
        let rep = evaluate_all(&sample()).unwrap();
        let mut csv_buf = Vec::new();
        write_report(&mut csv_buf, &rep, Some("p")).unwrap();
        let text = String::from_utf8(csv_buf).unwrap();
        assert_eq!(text.lines().count(), 2 + 12);
        let mut table = Vec::new();
        write_table(&mut table, &rep).unwrap();
        let table = String::from_utf8(table).unwrap();
        assert!(table.contains("fused false positives: 0 of 4 windows"));
        assert!(table.contains("note: no DM windows"));
    }
}
