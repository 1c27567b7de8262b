//! Flow grouping and time windowing.
//!
//! Frames are partitioned by [`FlowKey`] and bucketed into windows of
//! length `t_w` whose starts lie on a `stride` grid. Inter-arrival times
//! and jitter are computed per flow over the whole flow, so the first
//! interval of each window is seeded by the flow's preceding frame.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::{GooseFrame, MacAddr};
use crate::time::{duration_micros, Timestamp};

/// Number of previous inter-arrival times used for the jitter reference.
pub const JITTER_LOOKBACK: usize = 5;

/// Flow identity: GOOSE identification plus publisher MAC.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowKey {
    pub goose_id: String,
    pub src_mac: MacAddr,
}

impl FlowKey {
    pub fn of(frame: &GooseFrame) -> Self {
        FlowKey {
            goose_id: frame.identity().to_string(),
            src_mac: frame.src_mac,
        }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.goose_id, self.src_mac)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid flow key `{0}` (expected <goose-id>@<mac>)")]
pub struct ParseFlowKeyError(String);

impl FromStr for FlowKey {
    type Err = ParseFlowKeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseFlowKeyError(s.to_string());
        let (id, mac) = s.rsplit_once('@').ok_or_else(err)?;
        if id.is_empty() {
            return Err(err());
        }
        Ok(FlowKey {
            goose_id: id.to_string(),
            src_mac: mac.parse().map_err(|_| err())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AttackKind {
    #[serde(rename = "MS")]
    Ms,
    #[serde(rename = "DM")]
    Dm,
    #[serde(rename = "DoS")]
    Dos,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [AttackKind::Ms, AttackKind::Dm, AttackKind::Dos];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::Ms => "MS",
            AttackKind::Dm => "DM",
            AttackKind::Dos => "DoS",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ms" => Ok(AttackKind::Ms),
            "dm" => Ok(AttackKind::Dm),
            "dos" => Ok(AttackKind::Dos),
            _ => Err(ParseLabelError(s.to_string())),
        }
    }
}

/// Ground-truth label of one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Label {
    Normal,
    Attack(AttackKind),
    #[default]
    Unlabeled,
}

impl Label {
    pub fn is_attack(self) -> bool {
        matches!(self, Label::Attack(_))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Normal => f.write_str("normal"),
            Label::Attack(k) => f.write_str(k.as_str()),
            Label::Unlabeled => f.write_str("unlabeled"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label `{0}`")]
pub struct ParseLabelError(String);

impl FromStr for Label {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(Label::Normal),
            "unlabeled" | "" => Ok(Label::Unlabeled),
            _ => s.parse().map(Label::Attack),
        }
    }
}

/// The per-frame fields that windowed features read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowFrame {
    pub ts: Timestamp,
    pub st_num: u32,
    pub sq_num: u32,
    pub ttl_ms: u32,
    pub frame_len: u32,
    pub dst_mac: MacAddr,
}

impl From<&GooseFrame> for WindowFrame {
    fn from(f: &GooseFrame) -> Self {
        WindowFrame {
            ts: f.ts,
            st_num: f.st_num,
            sq_num: f.sq_num,
            ttl_ms: f.ttl_ms,
            frame_len: f.frame_len,
            dst_mac: f.dst_mac,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WindowError {
    #[error("window length must be positive (got {0} s)")]
    BadWindow(f64),
    #[error("stride must satisfy 0 < stride <= t_w (got stride {stride} s, t_w {t_w} s)")]
    BadStride { stride: f64, t_w: f64 },
    #[error("attack intervals of kind {kind} overlap at {at}")]
    OverlappingIntervals { kind: AttackKind, at: Timestamp },
    #[error("attack interval ends before it starts ({start} > {end})")]
    InvertedInterval { start: Timestamp, end: Timestamp },
}

/// Window length and stride, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub t_w_us: i64,
    pub stride_us: i64,
}

impl WindowConfig {
    /// `stride` defaults to `t_w` (tumbling windows).
    pub fn new(t_w: f64, stride: Option<f64>) -> Result<Self, WindowError> {
        let stride_s = stride.unwrap_or(t_w);
        let t_w_us = if t_w.is_finite() { duration_micros(t_w) } else { 0 };
        if t_w_us <= 0 {
            return Err(WindowError::BadWindow(t_w));
        }
        let stride_us = if stride_s.is_finite() { duration_micros(stride_s) } else { 0 };
        if stride_us <= 0 || stride_us > t_w_us {
            return Err(WindowError::BadStride { stride: stride_s, t_w });
        }
        Ok(WindowConfig { t_w_us, stride_us })
    }

    pub fn t_w_secs(&self) -> f64 {
        self.t_w_us as f64 / 1e6
    }
}

/// One (flow, window) bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowWindow {
    pub key: FlowKey,
    pub t_start: Timestamp,
    pub t_w_us: i64,
    pub frames: Vec<WindowFrame>,
    /// Inter-arrival times (s) ending at each frame in the window that has a
    /// predecessor in the flow.
    pub dt_series: Vec<f64>,
    /// |dt - median(previous dts)|, aligned with `dt_series`.
    pub jitter_series: Vec<f64>,
    pub label: Label,
}

impl FlowWindow {
    pub fn t_end(&self) -> Timestamp {
        self.t_start.add_micros(self.t_w_us)
    }

    pub fn pkt_count(&self) -> usize {
        self.frames.len()
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-frame inter-arrival and jitter for one time-sorted flow. Index 0 has
/// no predecessor and gets `None`.
fn flow_series(frames: &[WindowFrame]) -> Vec<Option<(f64, f64)>> {
    let mut out = Vec::with_capacity(frames.len());
    let mut dts: Vec<f64> = Vec::with_capacity(frames.len());
    let mut scratch = Vec::with_capacity(JITTER_LOOKBACK);
    for (i, f) in frames.iter().enumerate() {
        if i == 0 {
            out.push(None);
            continue;
        }
        let dt = f.ts.secs_since(frames[i - 1].ts);
        let lo = dts.len().saturating_sub(JITTER_LOOKBACK);
        let jitter = if dts.len() > lo {
            scratch.clear();
            scratch.extend_from_slice(&dts[lo..]);
            (dt - median(&mut scratch)).abs()
        } else {
            0.0
        };
        dts.push(dt);
        out.push(Some((dt, jitter)));
    }
    out
}

/// Buckets frames into per-flow windows, ordered by (flow, t_start).
pub fn build_windows(frames: &[GooseFrame], cfg: &WindowConfig) -> Vec<FlowWindow> {
    let mut flows: BTreeMap<FlowKey, Vec<WindowFrame>> = BTreeMap::new();
    for f in frames {
        flows.entry(FlowKey::of(f)).or_default().push(WindowFrame::from(f));
    }

    let mut out = Vec::new();
    for (key, mut flow) in flows {
        flow.sort_by_key(|f| f.ts);
        let series = flow_series(&flow);
        let first = flow[0].ts.micros();
        let last = flow[flow.len() - 1].ts.micros();
        let t0 = first.div_euclid(cfg.stride_us) * cfg.stride_us;
        let n_windows = (last - t0).div_euclid(cfg.stride_us) + 1;

        for k in 0..n_windows {
            let start = t0 + k * cfg.stride_us;
            let end = start + cfg.t_w_us;
            let lo = flow.partition_point(|f| f.ts.micros() < start);
            let hi = flow.partition_point(|f| f.ts.micros() < end);
            // Empty windows only between frames of the flow.
            if lo == hi && (lo == 0 || hi == flow.len()) {
                continue;
            }
            let (dt_series, jitter_series) = series[lo..hi].iter().flatten().copied().unzip();
            out.push(FlowWindow {
                key: key.clone(),
                t_start: Timestamp::from_micros(start),
                t_w_us: cfg.t_w_us,
                frames: flow[lo..hi].to_vec(),
                dt_series,
                jitter_series,
                label: Label::Unlabeled,
            });
        }
    }
    out
}

/// Ground-truth attack interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackInterval {
    pub start: Timestamp,
    pub end: Timestamp,
    pub kind: AttackKind,
}

impl AttackInterval {
    #[inline]
    pub fn contains(&self, ts: Timestamp) -> bool {
        self.start <= ts && ts < self.end
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// True when `[start, end)` shares time with this interval; an empty
    /// interval overlaps nothing.
    #[inline]
    pub fn overlaps(&self, start: Timestamp, end: Timestamp) -> bool {
        !self.is_empty() && self.start < end && start < self.end
    }
}

fn validate_intervals(intervals: &[AttackInterval]) -> Result<Vec<AttackInterval>, WindowError> {
    let mut sorted = intervals.to_vec();
    sorted.sort_by_key(|iv| (iv.start, iv.end, iv.kind));
    for iv in &sorted {
        if iv.end < iv.start {
            return Err(WindowError::InvertedInterval {
                start: iv.start,
                end: iv.end,
            });
        }
    }
    for kind in AttackKind::ALL {
        let mut prev_end: Option<Timestamp> = None;
        for iv in sorted.iter().filter(|iv| iv.kind == kind && iv.start < iv.end) {
            if prev_end.is_some_and(|e| iv.start < e) {
                return Err(WindowError::OverlappingIntervals { kind, at: iv.start });
            }
            prev_end = Some(iv.end);
        }
    }
    Ok(sorted)
}

/// Labels each window with the first attack interval (by start time) that
/// one of its frames falls into, or that its span meets if it is empty.
/// Everything else becomes [`Label::Normal`].
pub fn label_windows(windows: &mut [FlowWindow], intervals: &[AttackInterval]) -> Result<(), WindowError> {
    let sorted = validate_intervals(intervals)?;
    for w in windows.iter_mut() {
        let (start, end) = (w.t_start, w.t_end());
        let hit = sorted.iter().find(|iv| {
            if w.frames.is_empty() {
                iv.overlaps(start, end)
            } else {
                iv.overlaps(start, end) && w.frames.iter().any(|f| iv.contains(f.ts))
            }
        });
        w.label = hit.map_or(Label::Normal, |iv| Label::Attack(iv.kind));
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum LabelFileError {
    #[error("label file: {0}")]
    Csv(#[from] csv::Error),
    #[error("label file row {row}: {msg}")]
    Row { row: usize, msg: String },
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    start_s: String,
    end_s: String,
    kind: String,
}

/// Reads a `start_s,end_s,kind` sidecar. Lines starting with `#` are ignored.
pub fn read_labels<R: Read>(r: R) -> Result<Vec<AttackInterval>, LabelFileError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<LabelRow>().enumerate() {
        let row = row?;
        let bad = |msg: String| LabelFileError::Row { row: i + 1, msg };
        out.push(AttackInterval {
            start: row.start_s.parse().map_err(|e| bad(format!("{e}")))?,
            end: row.end_s.parse().map_err(|e| bad(format!("{e}")))?,
            kind: row.kind.parse().map_err(|e| bad(format!("{e}")))?,
        });
    }
    Ok(out)
}

pub fn write_labels<W: Write>(w: W, intervals: &[AttackInterval], header_comment: Option<&str>) -> Result<(), LabelFileError> {
    let mut w = w;
    if let Some(c) = header_comment {
        writeln!(w, "# {c}").map_err(csv::Error::from)?;
    }
    let mut wtr = csv::Writer::from_writer(w);
    for iv in intervals {
        wtr.serialize(LabelRow {
            start_s: iv.start.to_string(),
            end_s: iv.end.to_string(),
            kind: iv.kind.to_string(),
        })?;
    }
    if intervals.is_empty() {
        wtr.write_record(["start_s", "end_s", "kind"])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}
