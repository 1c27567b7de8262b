use std::fmt;

use serde::{Deserialize, Serialize};

use super::Verdict;
use crate::features::View;
use crate::window::{AttackInterval, AttackKind, Label};

/// Which decision is being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decider {
    Seq,
    Temp,
    Fused,
}

impl Decider {
    pub const ALL: [Decider; 3] = [Decider::Seq, Decider::Temp, Decider::Fused];

    pub fn fires(self, v: &Verdict) -> bool {
        match self {
            Decider::Seq => v.over(View::Seq),
            Decider::Temp => v.over(View::Temp),
            Decider::Fused => v.anomalous,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Decider::Seq => "seq",
            Decider::Temp => "temp",
            Decider::Fused => "fused",
        }
    }
}

impl fmt::Display for Decider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Positive class of an evaluation row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Positive {
    Kind(AttackKind),
    /// Any attack kind.
    Any,
}

impl Positive {
    pub const ALL: [Positive; 4] = [
        Positive::Kind(AttackKind::Ms),
        Positive::Kind(AttackKind::Dm),
        Positive::Kind(AttackKind::Dos),
        Positive::Any,
    ];

    fn matches(self, label: Label) -> bool {
        match (self, label) {
            (Positive::Kind(k), Label::Attack(l)) => k == l,
            (Positive::Any, Label::Attack(_)) => true,
            _ => false,
        }
    }
}

impl fmt::Display for Positive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Positive::Kind(k) => write!(f, "{k}"),
            Positive::Any => f.write_str("ALL"),
        }
    }
}

/// Confusion counts with the usual derived rates; every 0/0 ratio is 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl Counts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Counts { tp, fp, tn, fn_ }
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp as f64, self.positives() as f64)
    }

    pub fn specificity(&self) -> f64 {
        ratio(self.tn as f64, self.negatives() as f64)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp as f64, (self.tp + self.fp) as f64)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        ratio(2.0 * p * r, p + r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub positive: Positive,
    pub decider: Decider,
    pub counts: Counts,
    pub recall: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f1: f64,
    /// False positives over all windows in the input.
    pub fp_share: f64,
    /// No positive windows: recall is undefined and reported as 0.
    pub no_positives: bool,
}

/// Confusion row for one positive class: positives are windows carrying
/// that label, negatives are normal windows, other attacks are ignored.
/// Returns `None` if a verdict is unlabeled.
pub fn evaluate(verdicts: &[Verdict], positive: Positive, decider: Decider) -> Option<EvalRow> {
    let mut c = Counts::default();
    for v in verdicts {
        let fired = decider.fires(v);
        match v.meta.label {
            Label::Unlabeled => return None,
            Label::Normal => {
                if fired {
                    c.fp += 1
                } else {
                    c.tn += 1
                }
            }
            l if positive.matches(l) => {
                if fired {
                    c.tp += 1
                } else {
                    c.fn_ += 1
                }
            }
            _ => {}
        }
    }
    Some(EvalRow {
        positive,
        decider,
        counts: c,
        recall: c.recall(),
        specificity: c.specificity(),
        precision: c.precision(),
        f1: c.f1(),
        fp_share: ratio(c.fp as f64, verdicts.len() as f64),
        no_positives: c.positives() == 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub windows: usize,
    pub normal_windows: usize,
    pub fused_fp: usize,
    /// Fused false positives over all windows.
    pub fused_fp_share: f64,
    /// Fused false positives over normal windows.
    pub fused_fp_rate: f64,
}

impl EvalReport {
    pub fn row(&self, positive: Positive, decider: Decider) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.positive == positive && r.decider == decider)
    }
}

/// Every (attack kind or ALL) x (seq, temp, fused) row.
/// Returns `Err(index)` of the first unlabeled verdict.
pub fn evaluate_all(verdicts: &[Verdict]) -> Result<EvalReport, usize> {
    if let Some(i) = verdicts.iter().position(|v| v.meta.label == Label::Unlabeled) {
        return Err(i);
    }
    let rows = Positive::ALL
        .iter()
        .flat_map(|&p| Decider::ALL.iter().map(move |&d| (p, d)))
        .map(|(p, d)| evaluate(verdicts, p, d).expect("labels checked"))
        .collect();
    let normal_windows = verdicts.iter().filter(|v| v.meta.label == Label::Normal).count();
    let fused_fp = verdicts.iter().filter(|v| v.meta.label == Label::Normal && v.anomalous).count();
    Ok(EvalReport {
        rows,
        windows: verdicts.len(),
        normal_windows,
        fused_fp,
        fused_fp_share: ratio(fused_fp as f64, verdicts.len() as f64),
        fused_fp_rate: ratio(fused_fp as f64, normal_windows as f64),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalOutcome {
    pub interval: AttackInterval,
    /// Windows labeled with the interval's kind whose span meets it.
    pub windows: usize,
    pub flagged: usize,
    pub detected: bool,
}

/// Interval-level detection: an interval counts as detected when at least
/// one window labeled with its kind and overlapping it is flagged (fused).
pub fn interval_detection(verdicts: &[Verdict], intervals: &[AttackInterval]) -> Vec<IntervalOutcome> {
    intervals
        .iter()
        .map(|iv| {
            let hits: Vec<&Verdict> = verdicts
                .iter()
                .filter(|v| v.meta.label == Label::Attack(iv.kind) && iv.overlaps(v.meta.t_start, v.meta.t_end()))
                .collect();
            let flagged = hits.iter().filter(|v| v.anomalous).count();
            IntervalOutcome {
                interval: *iv,
                windows: hits.len(),
                flagged,
                detected: flagged > 0,
            }
        })
        .collect()
}
