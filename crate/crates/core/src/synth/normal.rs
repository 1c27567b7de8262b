//! Steady-state publisher traffic: heartbeats at the maximum interval and
//! doubling retransmission bursts after each state change.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::codec::{GooseFrame, MacAddr, VlanTag};
use crate::time::{duration_micros, Timestamp};

/// Uniform timestamp perturbation as a fraction of the nominal interval.
pub const JITTER_FRACTION: f64 = 0.02;

const BOOL_TAG: u8 = 0x83;
const MAX_ENTRIES: usize = 512;

fn default_dat_set() -> String {
    "LLN0$DataSet1".into()
}
fn default_appid() -> u16 {
    1
}
fn default_ttl_factor() -> f64 {
    2.0
}
fn default_frame_len() -> u32 {
    120
}
fn default_conf_rev() -> u32 {
    1
}

/// One simulated GOOSE publisher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublisherSpec {
    pub go_id: String,
    pub gocb_ref: String,
    #[serde(default = "default_dat_set")]
    pub dat_set: String,
    pub src_mac: MacAddr,
    pub dst_mac: MacAddr,
    #[serde(default = "default_appid")]
    pub appid: u16,
    #[serde(default)]
    pub vlan: Option<VlanTag>,
    /// First retransmission interval after a state change, ms.
    pub t_min_ms: f64,
    /// Heartbeat interval, ms.
    pub t_max_ms: f64,
    /// timeAllowedToLive = factor x the interval to the next frame.
    #[serde(default = "default_ttl_factor")]
    pub ttl_factor: f64,
    /// Poisson rate of state changes, events per second.
    #[serde(default)]
    pub event_rate: f64,
    /// allData is filled with boolean entries until the frame reaches this size.
    #[serde(default = "default_frame_len")]
    pub frame_len_base: u32,
    #[serde(default = "default_conf_rev")]
    pub conf_rev: u32,
    pub seed: u64,
}

impl PublisherSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(format!("publisher `{}`: {m}", self.go_id)));
        if !(self.t_min_ms > 0.0 && self.t_min_ms.is_finite()) {
            return bad("t_min_ms must be positive".into());
        }
        if !(self.t_max_ms >= self.t_min_ms && self.t_max_ms.is_finite()) {
            return bad("t_max_ms must be finite and at least t_min_ms".into());
        }
        if !(self.ttl_factor > 0.0 && self.ttl_factor.is_finite()) {
            return bad("ttl_factor must be positive".into());
        }
        if !(self.event_rate >= 0.0 && self.event_rate.is_finite()) {
            return bad("event_rate must be non-negative".into());
        }
        if !self.dst_mac.is_multicast() {
            return bad(format!("dst_mac {} is not a multicast address", self.dst_mac));
        }
        if self.go_id.is_empty() {
            return bad("go_id must not be empty".into());
        }
        Ok(())
    }

    /// First frame of the publisher with allData sized to `frame_len_base`.
    pub fn template(&self) -> Result<GooseFrame, SynthError> {
        let mut f = GooseFrame {
            ts: Timestamp::ZERO,
            dst_mac: self.dst_mac,
            src_mac: self.src_mac,
            vlan: self.vlan,
            appid: self.appid,
            pdu_len: 0,
            gocb_ref: self.gocb_ref.clone(),
            dat_set: self.dat_set.clone(),
            go_id: Some(self.go_id.clone()),
            ttl_ms: 1,
            event_ts: [0; 8],
            st_num: 1,
            sq_num: 0,
            test: false,
            conf_rev: self.conf_rev,
            nds_com: false,
            num_entries: 0,
            all_data: Vec::new(),
            frame_len: 0,
        };
        f.sync_lengths()?;
        while f.frame_len < self.frame_len_base && (f.num_entries as usize) < MAX_ENTRIES {
            f.all_data.extend_from_slice(&[BOOL_TAG, 1, 0]);
            f.num_entries += 1;
            f.sync_lengths()?;
        }
        Ok(f)
    }
}

/// IEC 61850 UtcTime: seconds, 24-bit fraction, quality byte.
pub fn utc_time(ts: Timestamp) -> [u8; 8] {
    let secs = ts.secs() as u32;
    let frac = ((ts.subsec_micros() as u64) << 24) / 1_000_000;
    let mut out = [0u8; 8];
    out[..4].copy_from_slice(&secs.to_be_bytes());
    out[4..7].copy_from_slice(&(frac as u32).to_be_bytes()[1..]);
    out[7] = 0x0a;
    out
}

/// Sets the first boolean entry to reflect the state number parity.
fn set_state(f: &mut GooseFrame) {
    if f.all_data.len() >= 3 && f.all_data[0] == BOOL_TAG && f.all_data[1] == 1 {
        f.all_data[2] = if f.st_num % 2 == 0 { 0xff } else { 0x00 };
    }
}

fn ms_to_us(ms: f64) -> f64 {
    ms * 1e3
}

/// Frames of one publisher over `[start, start + span)`, in time order.
pub fn publisher_frames(p: &PublisherSpec, start: Timestamp, span_s: f64) -> Result<Vec<GooseFrame>, SynthError> {
    p.validate()?;
    let template = p.template()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let end = duration_micros(span_s) as f64;
    let t_min = ms_to_us(p.t_min_ms);
    let t_max = ms_to_us(p.t_max_ms);
    let exp = |rng: &mut ChaCha8Rng| -> f64 {
        if p.event_rate > 0.0 {
            let u: f64 = rng.random();
            -(1.0 - u).ln() / p.event_rate * 1e6
        } else {
            f64::INFINITY
        }
    };

    // Offsets in microseconds from `start`.
    let mut next_tx: f64 = rng.random_range(0.0..t_max);
    let mut gap = t_max;
    let mut next_event = exp(&mut rng);
    let mut st: u32 = 1;
    let mut sq: u32 = 0;
    let mut first = true;
    let mut last_us = i64::MIN;
    let mut event_ts = utc_time(start);
    let mut out = Vec::new();

    loop {
        let is_event = next_event < next_tx;
        let nominal = if is_event { next_event } else { next_tx };
        if nominal >= end {
            break;
        }
        let (offset, next_gap) = if is_event {
            st = st.wrapping_add(1).max(1);
            sq = 0;
            next_event += exp(&mut rng);
            (nominal, t_min)
        } else {
            if !first {
                sq = sq.checked_add(1).unwrap_or(1);
            }
            let j: f64 = rng.random_range(-JITTER_FRACTION..=JITTER_FRACTION);
            (nominal + j * gap, (gap * 2.0).min(t_max))
        };
        first = false;

        let mut us = start.micros() + offset.max(0.0).round() as i64;
        if us <= last_us {
            us = last_us + 1;
        }
        last_us = us;
        let ts = Timestamp::from_micros(us);
        if is_event {
            event_ts = utc_time(ts);
        }

        let mut f = template.clone();
        f.ts = ts;
        f.st_num = st;
        f.sq_num = sq;
        f.event_ts = event_ts;
        f.ttl_ms = ((p.ttl_factor * next_gap / 1e3).round() as u32).max(1);
        set_state(&mut f);
        f.sync_lengths()?;
        out.push(f);

        // The burst after an event doubles from t_min; heartbeats stay at t_max.
        gap = next_gap;
        next_tx = nominal + next_gap;
    }
    Ok(out)
}

/// Merges per-publisher streams into one capture ordered by timestamp.
pub fn gen_normal(publishers: &[PublisherSpec], start: Timestamp, span_s: f64) -> Result<Vec<GooseFrame>, SynthError> {
    if !(span_s > 0.0 && span_s.is_finite()) {
        return Err(SynthError::Invalid(format!("span must be positive, got {span_s}")));
    }
    let mut all = Vec::new();
    for p in publishers {
        all.extend(publisher_frames(p, start, span_s)?);
    }
    all.sort_by_key(|f| f.ts);
    Ok(all)
}

/// Flips every boolean entry of a flat allData payload.
pub fn mutate_payload(all_data: &mut [u8]) {
    let mut i = 0;
    while i + 1 < all_data.len() {
        let len = all_data[i + 1] as usize;
        if len >= 0x80 || i + 2 + len > all_data.len() {
            break;
        }
        if all_data[i] == BOOL_TAG && len == 1 {
            all_data[i + 2] = if all_data[i + 2] == 0 { 0xff } else { 0x00 };
        }
        i += 2 + len;
    }
}
