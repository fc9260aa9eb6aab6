//! Hourly weather: temperature (°F), precipitation (inches), wind (mph).

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDateTime;

use super::{hour_index, parse_timestamp};
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::tensor::Matrix;

/// Longest run of missing hours that may be interpolated.
pub const MAX_GAP_HOURS: i64 = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct WeatherReading {
    pub time: NaiveDateTime,
    pub temperature: f64,
    pub precipitation: f64,
    pub wind: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeatherHour {
    pub hour: i64,
    pub temperature: f64,
    pub precipitation: f64,
    pub wind: f64,
}

impl WeatherHour {
    fn fields(&self) -> [f64; 3] {
        [self.temperature, self.precipitation, self.wind]
    }

    fn from_fields(hour: i64, f: [f64; 3]) -> Self {
        WeatherHour {
            hour,
            temperature: f[0],
            precipitation: f[1],
            wind: f[2],
        }
    }
}

/// Column names in the weather CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct WeatherColumns {
    pub timestamp: String,
    pub temperature: String,
    pub precipitation: String,
    pub wind: String,
}

impl Default for WeatherColumns {
    fn default() -> Self {
        WeatherColumns {
            timestamp: "timestamp".into(),
            temperature: "temperature".into(),
            precipitation: "precipitation".into(),
            wind: "wind_speed".into(),
        }
    }
}

impl WeatherColumns {
    /// Reads `weather.timestamp`, `weather.temperature`,
    /// `weather.precipitation` and `weather.wind` when present.
    pub fn from_mapping(kv: &KeyValues) -> Self {
        let d = Self::default();
        let pick = |k: &str, dflt: String| kv.get(k).map(str::to_string).unwrap_or(dflt);
        WeatherColumns {
            timestamp: pick("weather.timestamp", d.timestamp),
            temperature: pick("weather.temperature", d.temperature),
            precipitation: pick("weather.precipitation", d.precipitation),
            wind: pick("weather.wind", d.wind),
        }
    }
}

/// Parsed readings plus the number of rows that could not be used.
pub fn read_weather(path: &Path, cols: &WeatherColumns) -> Result<(Vec<WeatherReading>, usize)> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::DataAt {
                path: path.to_path_buf(),
                line: 1,
                message: format!("missing weather column {name:?}"),
            })
    };
    let (ti, te, pr, wi) = (
        find(&cols.timestamp)?,
        find(&cols.temperature)?,
        find(&cols.precipitation)?,
        find(&cols.wind)?,
    );
    let mut out = Vec::new();
    let mut skipped = 0;
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let Ok(rec) = rec else {
            skipped += 1;
            continue;
        };
        let num = |j: usize| rec.get(j).and_then(|s| s.trim().parse::<f64>().ok()).filter(|v| v.is_finite());
        let time = rec.get(ti).and_then(parse_timestamp);
        match (time, num(te), num(pr), num(wi)) {
            (Some(time), Some(temperature), Some(precipitation), Some(wind)) => {
                if precipitation < 0.0 {
                    return Err(Error::DataAt {
                        path: path.to_path_buf(),
                        line,
                        message: format!("negative precipitation {precipitation}"),
                    });
                }
                out.push(WeatherReading { time, temperature, precipitation, wind });
            }
            _ => skipped += 1,
        }
    }
    Ok((out, skipped))
}

/// Mean of every field per clock hour, then linear interpolation across
/// runs of at most [`MAX_GAP_HOURS`] missing hours. Longer gaps stay missing.
pub fn aggregate_weather(readings: &[WeatherReading]) -> Result<Vec<WeatherHour>> {
    let mut sums: BTreeMap<i64, ([f64; 3], usize)> = BTreeMap::new();
    for r in readings {
        if r.precipitation < 0.0 {
            return Err(Error::Data(format!("negative precipitation at {}", r.time)));
        }
        let e = sums.entry(hour_index(&r.time)).or_insert(([0.0; 3], 0));
        e.0[0] += r.temperature;
        e.0[1] += r.precipitation;
        e.0[2] += r.wind;
        e.1 += 1;
    }
    let observed: Vec<WeatherHour> = sums
        .into_iter()
        .map(|(h, (s, n))| WeatherHour::from_fields(h, s.map(|v| v / n as f64)))
        .collect();
    let mut out = Vec::with_capacity(observed.len());
    for pair in observed.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        out.push(a);
        let gap = b.hour - a.hour - 1;
        if gap > MAX_GAP_HOURS {
            // left as a hole; align_weather rejects hours that fall inside it
            continue;
        }
        let (fa, fb) = (a.fields(), b.fields());
        for k in 1..=gap {
            let w = k as f64 / (gap + 1) as f64;
            let f = [0, 1, 2].map(|i| fa[i] + w * (fb[i] - fa[i]));
            out.push(WeatherHour::from_fields(a.hour + k, f));
        }
    }
    if let Some(last) = observed.last() {
        out.push(*last);
    }
    Ok(out)
}

/// Weather on the dataset's hour axis as `hours × 3`
/// (temperature, precipitation, wind). Hours before the first or after the
/// last observation take the nearest observed value, up to the same gap
/// limit. Hours inside a gap longer than the limit are an error.
pub fn align_weather(hourly: &[WeatherHour], hours: &[i64]) -> Result<Matrix> {
    let (Some(first), Some(last)) = (hourly.first(), hourly.last()) else {
        return Err(Error::Data("no usable weather readings".into()));
    };
    let missing = |h: i64| {
        Error::Data(format!(
            "no weather within {MAX_GAP_HOURS} hours of {}",
            super::format_hour(h)
        ))
    };
    let mut out = Matrix::zeros(hours.len(), 3);
    for (row, &h) in hours.iter().enumerate() {
        let w = if h < first.hour {
            if first.hour - h > MAX_GAP_HOURS {
                return Err(missing(h));
            }
            *first
        } else if h > last.hour {
            if h - last.hour > MAX_GAP_HOURS {
                return Err(missing(h));
            }
            *last
        } else {
            match hourly.binary_search_by_key(&h, |w| w.hour) {
                Ok(i) => hourly[i],
                Err(_) => return Err(missing(h)),
            }
        };
        for (j, v) in w.fields().into_iter().enumerate() {
            out.set(row, j, v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(t: &str, temp: f64, p: f64, w: f64) -> WeatherReading {
        WeatherReading {
            time: parse_timestamp(t).unwrap(),
            temperature: temp,
            precipitation: p,
            wind: w,
        }
    }

    #[test]
    fn mean_within_hour() {
        let hs = aggregate_weather(&[
            r("2019-06-01 10:05:00", 10.0, 0.0, 4.0),
            r("2019-06-01 10:51:00", 20.0, 0.2, 6.0),
        ])
        .unwrap();
        assert_eq!(hs.len(), 1);
        assert_eq!(hs[0].temperature, 15.0);
        assert_eq!(hs[0].wind, 5.0);
    }

    #[test]
    fn interpolates_short_gaps_and_rejects_hours_in_long_ones() {
        let hs = aggregate_weather(&[
            r("2019-06-01 10:00:00", 10.0, 0.0, 0.0),
            r("2019-06-01 13:00:00", 40.0, 0.3, 3.0),
        ])
        .unwrap();
        let temps: Vec<f64> = hs.iter().map(|h| h.temperature).collect();
        assert_eq!(temps, vec![10.0, 20.0, 30.0, 40.0]);
        let long = aggregate_weather(&[
            r("2019-06-01 10:00:00", 10.0, 0.0, 0.0),
            r("2019-06-01 18:00:00", 40.0, 0.3, 3.0),
        ])
        .unwrap();
        assert_eq!(long.len(), 2);
        let h0 = long[0].hour;
        assert!(align_weather(&long, &[h0, h0 + 8]).is_ok());
        assert!(align_weather(&long, &[h0 + 4]).is_err());
        // exactly six missing hours is still allowed
        assert!(aggregate_weather(&[
            r("2019-06-01 10:00:00", 10.0, 0.0, 0.0),
            r("2019-06-01 17:00:00", 40.0, 0.3, 3.0),
        ])
        .is_ok());
    }

    #[test]
    fn align_holds_edges() {
        let hs = aggregate_weather(&[r("2019-06-01 10:00:00", 10.0, 0.1, 2.0)]).unwrap();
        let h0 = hs[0].hour;
        let m = align_weather(&hs, &[h0 - 2, h0, h0 + 6]).unwrap();
        assert_eq!(m.as_slice(), &[10.0, 0.1, 2.0, 10.0, 0.1, 2.0, 10.0, 0.1, 2.0]);
        assert!(align_weather(&hs, &[h0 + 7]).is_err());
    }

    #[test]
    fn negative_precipitation_is_rejected() {
        assert!(aggregate_weather(&[r("2019-06-01 10:00:00", 1.0, -0.1, 0.0)]).is_err());
    }
}
