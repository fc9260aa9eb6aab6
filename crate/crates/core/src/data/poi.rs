//! Points of interest around each station.

use std::collections::BTreeMap;
use std::path::Path;

use super::registry::StationRegistry;
use crate::error::{Error, Result};
use crate::kv::KeyValues;

pub const POI_CATEGORIES: usize = 13;
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const DEFAULT_RADIUS_M: f64 = 150.0;

/// The mapping file shipped with the crate.
pub const DEFAULT_MAPPING: &str = include_str!("../../data/mapping.txt");

/// Great-circle distance in meters between two points given in degrees.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}

/// Source category labels mapped onto the 13 feature slots.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryMap {
    pub slots: Vec<String>,
    labels: BTreeMap<String, usize>,
    pub latitude_column: String,
    pub longitude_column: String,
    pub category_column: String,
}

impl CategoryMap {
    pub fn from_mapping(kv: &KeyValues) -> Result<Self> {
        let slots: Vec<String> = kv
            .get("poi.slots")
            .ok_or_else(|| Error::Config("mapping lacks poi.slots".into()))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        if slots.len() != POI_CATEGORIES {
            return Err(Error::Config(format!(
                "poi.slots lists {} categories, expected {POI_CATEGORIES}",
                slots.len()
            )));
        }
        let mut labels = BTreeMap::new();
        for (label, slot) in kv.with_prefix("category.") {
            let idx = slots
                .iter()
                .position(|s| s == slot)
                .ok_or_else(|| Error::Config(format!("category.{label} maps to unknown slot {slot:?}")))?;
            labels.insert(label.trim().to_lowercase(), idx);
        }
        let col = |k: &str, d: &str| kv.get(k).unwrap_or(d).to_string();
        Ok(CategoryMap {
            slots,
            labels,
            latitude_column: col("poi.latitude", "latitude"),
            longitude_column: col("poi.longitude", "longitude"),
            category_column: col("poi.category", "category"),
        })
    }

    pub fn default_map() -> Self {
        Self::from_mapping(&KeyValues::parse(DEFAULT_MAPPING).expect("shipped mapping parses"))
            .expect("shipped mapping is valid")
    }

    pub fn slot(&self, label: &str) -> Option<usize> {
        self.labels.get(&label.trim().to_lowercase()).copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Poi {
    pub lat: f64,
    pub lon: f64,
    /// `None` when the label is not in the mapping.
    pub slot: Option<usize>,
    pub label: String,
}

/// POIs plus the count of unusable rows.
pub fn read_pois(path: &Path, map: &CategoryMap) -> Result<(Vec<Poi>, usize)> {
    let csv_err = |e| Error::Csv { path: path.to_path_buf(), source: e };
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::DataAt {
                path: path.to_path_buf(),
                line: 1,
                message: format!("missing POI column {name:?}"),
            })
    };
    let (la, lo, ca) = (
        find(&map.latitude_column)?,
        find(&map.longitude_column)?,
        find(&map.category_column)?,
    );
    let mut out = Vec::new();
    let mut skipped = 0;
    for rec in rdr.records() {
        let Ok(rec) = rec else {
            skipped += 1;
            continue;
        };
        let num = |j| rec.get(j).and_then(|s: &str| s.trim().parse::<f64>().ok()).filter(|v| v.is_finite());
        match (num(la), num(lo), rec.get(ca)) {
            (Some(lat), Some(lon), Some(label)) => out.push(Poi {
                lat,
                lon,
                slot: map.slot(label),
                label: label.trim().to_string(),
            }),
            _ => skipped += 1,
        }
    }
    Ok((out, skipped))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PoiReport {
    /// Within-radius POIs whose label had no slot, by label. They form the
    /// "other" bucket and never reach the features.
    pub unmapped: BTreeMap<String, usize>,
    pub stations_without_poi: usize,
}

/// Per station and category, the number of POIs strictly closer than
/// `radius_m`.
pub fn count_pois(
    registry: &StationRegistry,
    pois: &[Poi],
    radius_m: f64,
) -> (Vec<[u32; POI_CATEGORIES]>, PoiReport) {
    let mut report = PoiReport::default();
    let mut counts = Vec::with_capacity(registry.len());
    // cheap latitude pre-filter: 1 degree of latitude is ~111 km everywhere
    let lat_window = radius_m / (EARTH_RADIUS_M.to_radians()) * 1.01;
    for s in registry.stations() {
        let mut c = [0u32; POI_CATEGORIES];
        let mut any = false;
        for p in pois {
            if (p.lat - s.lat).abs() > lat_window {
                continue;
            }
            if haversine_m(s.lat, s.lon, p.lat, p.lon) < radius_m {
                match p.slot {
                    Some(k) => {
                        c[k] += 1;
                        any = true;
                    }
                    None => *report.unmapped.entry(p.label.clone()).or_insert(0) += 1,
                }
            }
        }
        if !any {
            report.stations_without_poi += 1;
        }
        counts.push(c);
    }
    (counts, report)
}
