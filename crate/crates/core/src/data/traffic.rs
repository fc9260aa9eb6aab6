//! Hourly pick-up and drop-off counts per station.

use std::collections::BTreeMap;
use std::ops::Range;

use super::registry::StationRegistry;
use super::trips::TripRecord;
use super::{hour_index, month_of, TrafficKind};
use crate::tensor::Matrix;

/// The hours covered by a dataset, ascending.
///
/// Built per calendar month: each month spans every hour from its earliest
/// to its latest observed trip hour, so every month is a contiguous run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HourAxis {
    hours: Vec<i64>,
}

impl HourAxis {
    pub fn new(mut hours: Vec<i64>) -> Self {
        hours.sort_unstable();
        hours.dedup();
        HourAxis { hours }
    }

    /// Month-by-month spans of the start and stop hours of `trips`.
    pub fn from_trips<'a>(trips: impl IntoIterator<Item = &'a TripRecord>) -> Self {
        let mut spans: BTreeMap<u32, (i64, i64)> = BTreeMap::new();
        for t in trips {
            for h in [hour_index(&t.start_time), hour_index(&t.stop_time)] {
                let e = spans.entry(month_of(h)).or_insert((h, h));
                e.0 = e.0.min(h);
                e.1 = e.1.max(h);
            }
        }
        HourAxis::new(spans.values().flat_map(|&(a, b)| a..=b).collect())
    }

    pub fn hours(&self) -> &[i64] {
        &self.hours
    }

    pub fn len(&self) -> usize {
        self.hours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hours.is_empty()
    }

    pub fn position(&self, hour: i64) -> Option<usize> {
        self.hours.binary_search(&hour).ok()
    }

    /// Maximal runs of consecutive hours within one calendar month, as
    /// `(month, row range)`.
    pub fn segments(&self) -> Vec<(u32, Range<usize>)> {
        let mut out: Vec<(u32, Range<usize>)> = Vec::new();
        for (i, &h) in self.hours.iter().enumerate() {
            let m = month_of(h);
            match out.last_mut() {
                Some((pm, r)) if *pm == m && self.hours[r.end - 1] + 1 == h => r.end = i + 1,
                _ => out.push((m, i..i + 1)),
            }
        }
        out
    }
}

/// Trips that did not land in the count matrix.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BucketSkips {
    /// The counted station is not in the registry.
    pub unknown_station: usize,
    /// The counted hour is not on the hour axis.
    pub outside_axis: usize,
}

impl BucketSkips {
    pub fn total(&self) -> usize {
        self.unknown_station + self.outside_axis
    }
}

/// Count `kind` events into an `hours × N` matrix. Pick-ups are counted at
/// the start station in the hour of the start time, drop-offs at the end
/// station in the hour of the stop time.
pub fn bucket_traffic<'a>(
    trips: impl IntoIterator<Item = &'a TripRecord>,
    registry: &StationRegistry,
    axis: &HourAxis,
    kind: TrafficKind,
) -> (Matrix, BucketSkips) {
    let mut counts = Matrix::zeros(axis.len(), registry.len());
    let mut skips = BucketSkips::default();
    for t in trips {
        let (station, time) = match kind {
            TrafficKind::Pickup => (t.start_station, &t.start_time),
            TrafficKind::Dropoff => (t.end_station, &t.stop_time),
        };
        let Some(col) = registry.index_of(station) else {
            skips.unknown_station += 1;
            continue;
        };
        let Some(row) = axis.position(hour_index(time)) else {
            skips.outside_axis += 1;
            continue;
        };
        let v = counts.get(row, col);
        counts.set(row, col, v + 1.0);
    }
    (counts, skips)
}
