//! Attack injection: message suppression, data manipulation, flooding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::normal::{mutate_payload, utc_time};
use super::SynthError;
use crate::codec::{GooseFrame, MacAddr};
use crate::time::{duration_micros, Timestamp};

fn one() -> f64 {
    1.0
}
fn hundred() -> u32 {
    100
}
fn forge_rate() -> f64 {
    10.0
}
fn yes() -> bool {
    true
}
fn flood_rate() -> f64 {
    1000.0
}
fn attacker_mac() -> MacAddr {
    MacAddr([0x02, 0x00, 0x00, 0x00, 0xde, 0xad])
}

/// One attack in a scenario; `start` is seconds after the capture start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AttackSpec {
    #[serde(rename = "MS")]
    Ms {
        start: f64,
        duration: f64,
        /// goID (or gocbRef) of the suppressed publisher.
        target: String,
        #[serde(default = "one")]
        drop_fraction: f64,
    },
    #[serde(rename = "DM")]
    Dm {
        start: f64,
        duration: f64,
        target: String,
        /// Added to the victim's current stNum in forged frames.
        #[serde(default = "hundred")]
        st_delta: u32,
        /// Forged frames per second.
        #[serde(default = "forge_rate")]
        forge_rate: f64,
        #[serde(default = "yes")]
        mutate_payload: bool,
        /// Send forged frames to this unicast address instead of the group.
        #[serde(default)]
        unicast_dst: Option<MacAddr>,
    },
    #[serde(rename = "DoS")]
    Dos {
        start: f64,
        duration: f64,
        /// Publisher whose frames are replayed; the first publisher if absent.
        #[serde(default)]
        target: Option<String>,
        #[serde(default = "flood_rate")]
        flood_rate: f64,
        /// Reuse the victim's source MAC (same flow) instead of `attacker_mac`.
        #[serde(default)]
        spoof_src: bool,
        #[serde(default = "attacker_mac")]
        attacker_mac: MacAddr,
    },
}

impl AttackSpec {
    pub fn start(&self) -> f64 {
        match self {
            AttackSpec::Ms { start, .. } | AttackSpec::Dm { start, .. } | AttackSpec::Dos { start, .. } => *start,
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            AttackSpec::Ms { duration, .. } | AttackSpec::Dm { duration, .. } | AttackSpec::Dos { duration, .. } => *duration,
        }
    }
}

/// Template for forged frames: the victim's last frame before `at`, or its
/// first frame if it has not transmitted yet.
fn victim_template<'a>(frames: &'a [GooseFrame], target: &str, at: Timestamp) -> Result<&'a GooseFrame, SynthError> {
    let victim = frames.iter().filter(|f| f.identity() == target);
    let first = victim.clone().next().ok_or_else(|| SynthError::UnknownTarget(target.to_string()))?;
    Ok(victim.take_while(|f| f.ts < at).last().unwrap_or(first))
}

/// `count` instants uniformly jittered within consecutive slots of `[from, to)`.
fn slot_times<R: Rng>(from: Timestamp, to: Timestamp, rate: f64, rng: &mut R) -> Vec<Timestamp> {
    let span = (to.micros() - from.micros()) as f64;
    let count = (rate * span / 1e6).floor() as usize;
    if count == 0 {
        return Vec::new();
    }
    let slot = span / count as f64;
    let mut out: Vec<Timestamp> = (0..count)
        .map(|k| {
            let u: f64 = rng.random();
            from.add_micros(((k as f64 + u) * slot).floor() as i64)
        })
        .collect();
    out.sort();
    out
}

fn merge(mut frames: Vec<GooseFrame>, injected: Vec<GooseFrame>) -> Vec<GooseFrame> {
    frames.extend(injected);
    frames.sort_by_key(|f| f.ts);
    frames
}

/// Drops each victim frame in `[from, to)` with probability `drop_fraction`.
pub fn inject_ms<R: Rng>(frames: Vec<GooseFrame>, target: &str, from: Timestamp, to: Timestamp, drop_fraction: f64, rng: &mut R) -> Result<Vec<GooseFrame>, SynthError> {
    if !(0.0..=1.0).contains(&drop_fraction) {
        return Err(SynthError::Invalid(format!("drop_fraction {drop_fraction} not in [0, 1]")));
    }
    if !frames.iter().any(|f| f.identity() == target) {
        return Err(SynthError::UnknownTarget(target.to_string()));
    }
    Ok(frames
        .into_iter()
        .filter(|f| {
            let hit = f.identity() == target && from <= f.ts && f.ts < to;
            // Always draw for victim frames in range so the stream is stable.
            !(hit && rng.random::<f64>() < drop_fraction)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmParams {
    pub st_delta: u32,
    pub forge_rate: f64,
    pub mutate_payload: bool,
    pub unicast_dst: Option<MacAddr>,
}

/// Interleaves forged frames carrying the victim's identity with a jumped
/// stNum, restarted sqNum and (optionally) flipped payload.
pub fn inject_dm<R: Rng>(frames: Vec<GooseFrame>, target: &str, from: Timestamp, to: Timestamp, p: &DmParams, rng: &mut R) -> Result<Vec<GooseFrame>, SynthError> {
    if !(p.forge_rate >= 0.0 && p.forge_rate.is_finite()) {
        return Err(SynthError::Invalid(format!("forge_rate {} must be non-negative", p.forge_rate)));
    }
    if let Some(mac) = p.unicast_dst {
        if mac.is_multicast() {
            return Err(SynthError::Invalid(format!("unicast_dst {mac} is a group address")));
        }
    }
    let template = victim_template(&frames, target, from)?.clone();
    let forged_st = template.st_num.saturating_add(p.st_delta);
    let times = slot_times(from, to, p.forge_rate, rng);
    let mut forged = Vec::with_capacity(times.len());
    let mut payload = template.all_data.clone();
    if p.mutate_payload {
        mutate_payload(&mut payload);
    }
    for (k, ts) in times.into_iter().enumerate() {
        let mut f = template.clone();
        f.ts = ts;
        f.st_num = forged_st;
        f.sq_num = k as u32;
        f.all_data = payload.clone();
        if k == 0 {
            f.event_ts = utc_time(ts);
        }
        if let Some(mac) = p.unicast_dst {
            f.dst_mac = mac;
        }
        f.sync_lengths()?;
        forged.push(f);
    }
    if let Some(first) = forged.first().map(|f| f.event_ts) {
        forged.iter_mut().for_each(|f| f.event_ts = first);
    }
    Ok(merge(frames, forged))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DosParams {
    pub flood_rate: f64,
    pub spoof_src: bool,
    pub attacker_mac: MacAddr,
}

/// Adds `flood_rate` replayed frames per second over `[from, to)`.
pub fn inject_dos<R: Rng>(frames: Vec<GooseFrame>, target: &str, from: Timestamp, to: Timestamp, p: &DosParams, rng: &mut R) -> Result<Vec<GooseFrame>, SynthError> {
    if !(p.flood_rate >= 0.0 && p.flood_rate.is_finite()) {
        return Err(SynthError::Invalid(format!("flood_rate {} must be non-negative", p.flood_rate)));
    }
    let template = victim_template(&frames, target, from)?.clone();
    let times = slot_times(from, to, p.flood_rate, rng);
    let mut flood = Vec::with_capacity(times.len());
    for (k, ts) in times.into_iter().enumerate() {
        let mut f = template.clone();
        f.ts = ts;
        f.sq_num = template.sq_num.wrapping_add(1 + k as u32);
        if !p.spoof_src {
            f.src_mac = p.attacker_mac;
        }
        f.sync_lengths()?;
        flood.push(f);
    }
    Ok(merge(frames, flood))
}

/// Absolute `[from, to)` of an attack relative to the capture start.
pub(crate) fn attack_span(start: Timestamp, a: &AttackSpec) -> (Timestamp, Timestamp) {
    let from = start.add_micros(duration_micros(a.start()));
    (from, from.add_micros(duration_micros(a.duration())))
}
