//! Per-station prediction series for external plotting.

use std::path::Path;

use chrono::NaiveDate;

use super::evaluate::{read_predictions, write_predictions};
use super::metrics::PredictionRecord;
use crate::data::hour_index;
use crate::error::{Error, Result};

/// Parse `YYYY-MM-DD`.
pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|_| Error::Config(format!("bad date {s:?}, expected YYYY-MM-DD")))
}

/// Records of `station` from the start of `from` through the end of `to`,
/// ordered by hour. An unknown station is an error that lists the closest
/// ids present.
pub fn select_series(
    records: &[PredictionRecord],
    station: u64,
    from: NaiveDate,
    to: NaiveDate,
) -> Result<Vec<PredictionRecord>> {
    let mut ids: Vec<u64> = records.iter().map(|r| r.station).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.binary_search(&station).is_err() {
        ids.sort_by_key(|&x| (x.abs_diff(station), x));
        ids.truncate(5);
        let near: Vec<String> = ids.iter().map(u64::to_string).collect();
        return Err(Error::Data(format!(
            "station {station} is not in the predictions; nearest ids: {}",
            near.join(", ")
        )));
    }
    let lo = hour_index(&from.and_hms_opt(0, 0, 0).expect("midnight"));
    let hi = hour_index(&to.and_hms_opt(23, 0, 0).expect("last hour"));
    let mut out: Vec<PredictionRecord> = records
        .iter()
        .filter(|r| r.station == station && (lo..=hi).contains(&r.hour))
        .cloned()
        .collect();
    out.sort_by_key(|r| r.hour);
    if out.is_empty() {
        log::warn!("no predictions for station {station} between {from} and {to}");
    }
    Ok(out)
}

/// The `plot-data` command; returns the number of rows written.
pub fn run_plot_data(pred: &Path, station: u64, from: &str, to: &str, out: &Path) -> Result<usize> {
    let (from, to) = (parse_date(from)?, parse_date(to)?);
    if to < from {
        return Err(Error::Config(format!("--to {to} is before --from {from}")));
    }
    let series = select_series(&read_predictions(pred)?, station, from, to)?;
    write_predictions(out, &series)?;
    Ok(series.len())
}
