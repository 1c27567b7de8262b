//! Microsecond timestamps.
//!
//! Capture timestamps are kept as integer microseconds so that window
//! boundaries and pcap round-trips are exact. Conversion to floating-point
//! seconds happens only when features are computed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const MICROS_PER_SEC: i64 = 1_000_000;

/// Seconds since the Unix epoch with microsecond resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(i64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    #[inline]
    pub const fn from_micros(us: i64) -> Self {
        Timestamp(us)
    }

    #[inline]
    pub const fn micros(self) -> i64 {
        self.0
    }

    pub const fn from_secs_micros(secs: i64, micros: i64) -> Self {
        Timestamp(secs * MICROS_PER_SEC + micros)
    }

    /// Rounds to the nearest microsecond.
    pub fn from_secs_f64(secs: f64) -> Self {
        Timestamp((secs * MICROS_PER_SEC as f64).round() as i64)
    }

    #[inline]
    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC as f64
    }

    #[inline]
    pub fn secs(self) -> i64 {
        self.0.div_euclid(MICROS_PER_SEC)
    }

    #[inline]
    pub fn subsec_micros(self) -> i64 {
        self.0.rem_euclid(MICROS_PER_SEC)
    }

    #[inline]
    pub fn add_micros(self, us: i64) -> Self {
        Timestamp(self.0 + us)
    }

    /// Difference `self - earlier` in seconds.
    #[inline]
    pub fn secs_since(self, earlier: Timestamp) -> f64 {
        (self.0 - earlier.0) as f64 / MICROS_PER_SEC as f64
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.secs(), self.subsec_micros())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid timestamp `{0}`")]
pub struct ParseTimestampError(String);

impl FromStr for Timestamp {
    type Err = ParseTimestampError;

    /// Parses decimal seconds exactly (no float round-trip), truncating
    /// digits beyond the sixth fractional place.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseTimestampError(s.to_string());
        let t = s.trim();
        let (neg, t) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let (int, frac) = t.split_once('.').unwrap_or((t, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(err());
        }
        if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let secs: i64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| err())? };
        let mut micros = 0i64;
        for (i, b) in frac.bytes().take(6).enumerate() {
            micros += i64::from(b - b'0') * 10i64.pow(5 - i as u32);
        }
        let total = secs
            .checked_mul(MICROS_PER_SEC)
            .and_then(|v| v.checked_add(micros))
            .ok_or_else(err)?;
        Ok(Timestamp(if neg { -total } else { total }))
    }
}

/// Converts a positive duration in seconds to whole microseconds.
pub fn duration_micros(secs: f64) -> i64 {
    (secs * MICROS_PER_SEC as f64).round() as i64
}
