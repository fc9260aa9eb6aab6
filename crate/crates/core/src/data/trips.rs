//! Trip records from monthly bike-share exports.

use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;

use super::parse_timestamp;
use crate::error::{Error, Result};

/// NYC bounding box, degrees.
pub const LAT_RANGE: (f64, f64) = (40.4, 41.1);
pub const LON_RANGE: (f64, f64) = (-74.3, -73.6);

#[derive(Clone, Debug, PartialEq)]
pub struct TripRecord {
    pub start_time: NaiveDateTime,
    pub stop_time: NaiveDateTime,
    pub start_station: u64,
    pub end_station: u64,
    pub start_lat: f64,
    pub start_lon: f64,
    pub end_lat: f64,
    pub end_lon: f64,
    /// Seconds.
    pub duration: f64,
}

/// One parsed monthly file.
#[derive(Clone, Debug, Default)]
pub struct TripFile {
    pub path: PathBuf,
    pub trips: Vec<TripRecord>,
    pub rows: usize,
    /// Rows that failed to parse or violated a record invariant.
    pub skipped: usize,
    /// First few skip reasons with their line numbers.
    pub skip_samples: Vec<String>,
}

impl TripFile {
    pub fn skip_fraction(&self) -> f64 {
        if self.rows == 0 {
            0.0
        } else {
            self.skipped as f64 / self.rows as f64
        }
    }
}

const MAX_SAMPLES: usize = 5;

struct Columns {
    start_time: usize,
    stop_time: usize,
    start_station: usize,
    end_station: usize,
    start_lat: usize,
    start_lon: usize,
    end_lat: usize,
    end_lon: usize,
    duration: Option<usize>,
}

fn find_columns(headers: &csv::StringRecord, path: &Path) -> Result<Columns> {
    let norm = |s: &str| s.trim().trim_matches('"').to_ascii_lowercase();
    let names: Vec<String> = headers.iter().map(norm).collect();
    let find = |want: &str| names.iter().position(|n| n == want);
    let need = |want: &str| {
        find(want).ok_or_else(|| Error::DataAt {
            path: path.to_path_buf(),
            line: 1,
            message: format!("missing trip column {want:?}"),
        })
    };
    Ok(Columns {
        start_time: need("starttime")?,
        stop_time: need("stoptime")?,
        start_station: need("start station id")?,
        end_station: need("end station id")?,
        start_lat: need("start station latitude")?,
        start_lon: need("start station longitude")?,
        end_lat: need("end station latitude")?,
        end_lon: need("end station longitude")?,
        duration: find("tripduration"),
    })
}

fn in_bbox(lat: f64, lon: f64) -> bool {
    (LAT_RANGE.0..=LAT_RANGE.1).contains(&lat) && (LON_RANGE.0..=LON_RANGE.1).contains(&lon)
}

fn parse_row(rec: &csv::StringRecord, c: &Columns) -> std::result::Result<TripRecord, String> {
    let field = |i: usize| rec.get(i).map(str::trim).ok_or_else(|| format!("missing field {i}"));
    let time = |i: usize| {
        let s = field(i)?;
        parse_timestamp(s).ok_or_else(|| format!("bad timestamp {s:?}"))
    };
    let id = |i: usize| {
        let s = field(i)?;
        s.parse::<u64>().map_err(|_| format!("bad station id {s:?}"))
    };
    let num = |i: usize| {
        let s = field(i)?;
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("bad number {s:?}"))
    };
    let start_time = time(c.start_time)?;
    let stop_time = time(c.stop_time)?;
    if stop_time < start_time {
        return Err("stop time before start time".into());
    }
    let (start_lat, start_lon) = (num(c.start_lat)?, num(c.start_lon)?);
    let (end_lat, end_lon) = (num(c.end_lat)?, num(c.end_lon)?);
    if !in_bbox(start_lat, start_lon) || !in_bbox(end_lat, end_lon) {
        return Err("coordinates outside the NYC bounding box".into());
    }
    let duration = match c.duration {
        Some(i) => num(i)?,
        None => (stop_time - start_time).num_milliseconds() as f64 / 1000.0,
    };
    Ok(TripRecord {
        start_time,
        stop_time,
        start_station: id(c.start_station)?,
        end_station: id(c.end_station)?,
        start_lat,
        start_lon,
        end_lat,
        end_lon,
        duration,
    })
}

/// Parse trips from any reader; `path` is only used in messages.
pub fn read_trips_from(reader: impl Read, path: &Path) -> Result<TripFile> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(reader);
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let cols = find_columns(&headers, path)?;
    let mut out = TripFile {
        path: path.to_path_buf(),
        ..TripFile::default()
    };
    for (i, rec) in rdr.records().enumerate() {
        out.rows += 1;
        let line = i as u64 + 2;
        let parsed = match rec {
            Ok(r) => parse_row(&r, &cols),
            Err(e) => Err(e.to_string()),
        };
        match parsed {
            Ok(t) => out.trips.push(t),
            Err(reason) => {
                out.skipped += 1;
                if out.skip_samples.len() < MAX_SAMPLES {
                    out.skip_samples.push(format!("{}:{line}: {reason}", path.display()));
                }
            }
        }
    }
    if out.skip_fraction() > 0.01 {
        log::warn!(
            "{}: skipped {} of {} rows ({:.2}%)",
            path.display(),
            out.skipped,
            out.rows,
            100.0 * out.skip_fraction()
        );
    }
    Ok(out)
}

pub fn read_trips(path: &Path) -> Result<TripFile> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trips_from(std::io::BufReader::new(f), path)
}
