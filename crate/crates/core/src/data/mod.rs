//! Ingestion of trip, weather and POI records into hourly per-station
//! feature frames.
//!
//! Each station contributes `s = 19` features per hour, in this order:
//!
//! | index | feature |
//! |-------|---------|
//! | 0 | traffic count (pick-ups or drop-offs, matching the target) |
//! | 1 | temperature |
//! | 2 | precipitation, min-max scaled to `[0, 10]` |
//! | 3 | wind speed |
//! | 4..17 | POI counts within the radius, one per category |
//! | 17 | longitude, min-max scaled to `[0, 100]` |
//! | 18 | latitude, min-max scaled to `[0, 100]` |
//!
//! The flattened feature index of station `i`, feature `j` is `i·19 + j`.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDateTime};

use crate::error::Error;

pub mod dataset;
pub mod frames;
pub mod poi;
pub mod registry;
pub mod scaling;
pub mod traffic;
pub mod trips;
pub mod weather;
pub mod windows;

pub use dataset::Dataset;
pub use frames::{FrameSource, WindowSet};
pub use registry::{Station, StationRegistry};

/// Features per station in the assembled frames.
pub const FEATURES_PER_STATION: usize = 19;

/// Pick-ups (demand) or drop-offs (returns).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrafficKind {
    Pickup,
    Dropoff,
}

impl TrafficKind {
    pub fn name(self) -> &'static str {
        match self {
            TrafficKind::Pickup => "pickup",
            TrafficKind::Dropoff => "dropoff",
        }
    }
}

impl fmt::Display for TrafficKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrafficKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "pickup" | "demand" => Ok(TrafficKind::Pickup),
            "dropoff" | "return" => Ok(TrafficKind::Dropoff),
            _ => Err(Error::Config(format!("unknown target {s:?} (expected pickup or dropoff)"))),
        }
    }
}

/// Whole hours since 1970-01-01 00:00 of a naive local timestamp.
pub fn hour_index(t: &NaiveDateTime) -> i64 {
    t.and_utc().timestamp().div_euclid(3600)
}

pub fn hour_datetime(hour: i64) -> NaiveDateTime {
    DateTime::from_timestamp(hour * 3600, 0)
        .expect("hour index in chrono range")
        .naive_utc()
}

/// `YYYY-MM-DD HH:00`
pub fn format_hour(hour: i64) -> String {
    hour_datetime(hour).format("%Y-%m-%d %H:00").to_string()
}

/// Calendar month key `YYYYMM` of an hour index.
pub fn month_of(hour: i64) -> u32 {
    let t = hour_datetime(hour);
    t.year() as u32 * 100 + t.month()
}

/// Parse `YYYY-MM` (or `YYYYMM`) into a month key.
pub fn parse_month(s: &str) -> Result<u32, Error> {
    let digits: String = s.chars().filter(|c| c.is_ascii_digit()).collect();
    let bad = || Error::Config(format!("bad month {s:?}, expected YYYY-MM"));
    if digits.len() != 6 {
        return Err(bad());
    }
    let key: u32 = digits.parse().map_err(|_| bad())?;
    if !(1..=12).contains(&(key % 100)) {
        return Err(bad());
    }
    Ok(key)
}

pub fn format_month(key: u32) -> String {
    format!("{:04}-{:02}", key / 100, key % 100)
}

/// Timestamps as `YYYY-MM-DD HH:MM:SS` with optional fractional seconds.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim().trim_matches('"');
    NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f"))
        .ok()
}
