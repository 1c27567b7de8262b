//! Synthetic GOOSE captures: normal publisher traffic plus injected
//! attacks, written as a pcap with a ground-truth label sidecar.

mod attack;
mod normal;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::capture::{write_pcap, CaptureError};
use crate::codec::{EncodeError, GooseFrame};
use crate::config::{TOOL_NAME, TOOL_VERSION};
use crate::time::Timestamp;
use crate::window::{write_labels, AttackInterval, AttackKind, LabelFileError};

pub use attack::{inject_dm, inject_dos, inject_ms, AttackSpec, DmParams, DosParams};
pub use normal::{gen_normal, mutate_payload, publisher_frames, utc_time, PublisherSpec, JITTER_FRACTION};

pub const SCENARIO_VERSION: u32 = 1;
pub const CAPTURE_FILE: &str = "capture.pcap";
pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("attack target `{0}` matches no publisher")]
    UnknownTarget(String),
    #[error("cannot encode generated frame: {0}")]
    Encode(#[from] EncodeError),
    #[error("scenario file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Capture(#[from] CaptureError),
    #[error(transparent)]
    Labels(#[from] LabelFileError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

fn default_start() -> f64 {
    1_700_000_000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    /// Seeds attack randomness; publishers carry their own seeds.
    pub seed: u64,
    /// Capture start, Unix seconds.
    #[serde(default = "default_start")]
    pub start_time: f64,
    /// Capture length, seconds.
    pub span: f64,
    pub publishers: Vec<PublisherSpec>,
    #[serde(default)]
    pub attacks: Vec<AttackSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub frames: Vec<GooseFrame>,
    pub intervals: Vec<AttackInterval>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        if self.version != SCENARIO_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if !(self.span > 0.0 && self.span.is_finite()) {
            return bad(format!("span must be positive, got {}", self.span));
        }
        if !(self.start_time >= 0.0 && self.start_time.is_finite()) {
            return bad("start_time must be a non-negative Unix time".into());
        }
        if self.publishers.is_empty() {
            return bad("at least one publisher is required".into());
        }
        for (i, p) in self.publishers.iter().enumerate() {
            p.validate()?;
            if self.publishers[..i].iter().any(|q| q.go_id == p.go_id && q.src_mac == p.src_mac) {
                return bad(format!("duplicate publisher `{}`", p.go_id));
            }
        }
        for (i, a) in self.attacks.iter().enumerate() {
            let (s, d) = (a.start(), a.duration());
            if !(s >= 0.0 && d >= 0.0 && s + d <= self.span) {
                return bad(format!("attack {i}: window [{s}, {}] is outside the capture span", s + d));
            }
            let target = match a {
                AttackSpec::Ms { target, .. } | AttackSpec::Dm { target, .. } => Some(target),
                AttackSpec::Dos { target, .. } => target.as_ref(),
            };
            if let Some(t) = target {
                if !self.publishers.iter().any(|p| &p.go_id == t) {
                    return Err(SynthError::UnknownTarget(t.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn start(&self) -> Timestamp {
        Timestamp::from_secs_f64(self.start_time)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("scenario serializes")))
    }

    pub fn provenance(&self) -> String {
        format!("{TOOL_NAME} {TOOL_VERSION} scenario-sha256={}", self.hash())
    }
}

/// Generates the scenario's normal traffic and applies its attacks in order.
pub fn run_scenario(s: &Scenario) -> Result<SynthOutput, SynthError> {
    s.validate()?;
    let start = s.start();
    let mut frames = gen_normal(&s.publishers, start, s.span)?;
    let mut intervals = Vec::with_capacity(s.attacks.len());
    for (i, a) in s.attacks.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_add(i as u64));
        let (from, to) = attack::attack_span(start, a);
        let kind = match a {
            AttackSpec::Ms { target, drop_fraction, .. } => {
                frames = inject_ms(frames, target, from, to, *drop_fraction, &mut rng)?;
                AttackKind::Ms
            }
            AttackSpec::Dm {
                target,
                st_delta,
                forge_rate,
                mutate_payload,
                unicast_dst,
                ..
            } => {
                let p = DmParams {
                    st_delta: *st_delta,
                    forge_rate: *forge_rate,
                    mutate_payload: *mutate_payload,
                    unicast_dst: *unicast_dst,
                };
                frames = inject_dm(frames, target, from, to, &p, &mut rng)?;
                AttackKind::Dm
            }
            AttackSpec::Dos {
                target,
                flood_rate,
                spoof_src,
                attacker_mac,
                ..
            } => {
                let p = DosParams {
                    flood_rate: *flood_rate,
                    spoof_src: *spoof_src,
                    attacker_mac: *attacker_mac,
                };
                let target = target.clone().unwrap_or_else(|| s.publishers[0].go_id.clone());
                frames = inject_dos(frames, &target, from, to, &p, &mut rng)?;
                AttackKind::Dos
            }
        };
        intervals.push(AttackInterval { start: from, end: to, kind });
    }
    Ok(SynthOutput { frames, intervals })
}

/// Writes `capture.pcap` and `labels.csv` into `dir`.
pub fn write_outputs(out: &SynthOutput, dir: &Path, provenance: &str) -> Result<(), SynthError> {
    std::fs::create_dir_all(dir)?;
    write_pcap(&out.frames, dir.join(CAPTURE_FILE))?;
    let f = BufWriter::new(File::create(dir.join(LABELS_FILE))?);
    write_labels(f, &out.intervals, Some(provenance))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{decode_frame, encode_frame};

    const SCENARIO: &str = r#"{
        "version": 1,
        "seed": 5,
        "start_time": 1700000000.0,
        "span": 30,
        "publishers": [
            {"go_id": "IED1/LLN0$GO$a", "gocb_ref": "IED1/LLN0$GO$a", "src_mac": "00:1a:b6:00:00:01",
             "dst_mac": "01:0c:cd:01:00:01", "t_min_ms": 4, "t_max_ms": 200, "event_rate": 0.1, "seed": 1},
            {"go_id": "IED2/LLN0$GO$b", "gocb_ref": "IED2/LLN0$GO$b", "src_mac": "00:1a:b6:00:00:02",
             "dst_mac": "01:0c:cd:01:00:02", "t_min_ms": 4, "t_max_ms": 500, "seed": 2}
        ],
        "attacks": [
            {"kind": "MS", "start": 5, "duration": 3, "target": "IED1/LLN0$GO$a"},
            {"kind": "DM", "start": 12, "duration": 3, "target": "IED2/LLN0$GO$b"},
            {"kind": "DoS", "start": 20, "duration": 2, "flood_rate": 200}
        ]
    }"#;

    #[test]
    fn scenario_runs_and_frames_roundtrip() {
        let s = Scenario::from_json(SCENARIO).unwrap();
        let out = run_scenario(&s).unwrap();
        assert_eq!(out.intervals.len(), 3);
        assert_eq!(out.intervals[0].kind, AttackKind::Ms);
        assert_eq!(out.intervals[2].end.micros() - out.intervals[2].start.micros(), 2_000_000);
        assert!(out.frames.windows(2).all(|w| w[0].ts <= w[1].ts));
        for f in &out.frames {
            let bytes = encode_frame(f).unwrap();
            assert_eq!(&decode_frame(&bytes, f.ts).unwrap(), f);
        }
        assert_eq!(run_scenario(&s).unwrap(), out);
    }

    #[test]
    fn scenario_validation() {
        let mut s = Scenario::from_json(SCENARIO).unwrap();
        s.attacks.push(AttackSpec::Ms {
            start: 29.0,
            duration: 5.0,
            target: "IED1/LLN0$GO$a".into(),
            drop_fraction: 1.0,
        });
        assert!(matches!(s.validate(), Err(SynthError::Invalid(_))));
        let bad = SCENARIO.replace("\"target\": \"IED2/LLN0$GO$b\"", "\"target\": \"nope\"");
        assert!(matches!(Scenario::from_json(&bad), Err(SynthError::UnknownTarget(_))));
        let err = Scenario::from_json("{\n  \"version\": 1,\n  \"seed\": }").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn outputs_written() {
        let dir = tempfile::tempdir().unwrap();
        let s = Scenario::from_json(SCENARIO).unwrap();
        let out = run_scenario(&s).unwrap();
        write_outputs(&out, dir.path(), &s.provenance()).unwrap();
        let (frames, meta) = crate::capture::read_goose(dir.path().join(CAPTURE_FILE)).unwrap();
        assert_eq!(frames, out.frames);
        assert_eq!(meta.malformed_count, 0);
        let labels = crate::window::read_labels(File::open(dir.path().join(LABELS_FILE)).unwrap()).unwrap();
        assert_eq!(labels, out.intervals);
    }
}
