//! The canonical station set and its ordering.

use std::collections::{BTreeMap, BTreeSet};

use super::poi::{haversine_m, POI_CATEGORIES};
use super::trips::TripFile;
use crate::container::{Container, NamedArray};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Station {
    pub id: u64,
    pub lat: f64,
    pub lon: f64,
    pub poi: [u32; POI_CATEGORIES],
}

/// Stations sorted by ascending id; a station's position is its index on the
/// station axis of every matrix and flattened feature vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StationRegistry {
    stations: Vec<Station>,
}

/// Two trip rows that disagree about a station's location by more than
/// [`CONFLICT_METERS`].
#[derive(Clone, Debug, PartialEq)]
pub struct CoordConflict {
    pub station: u64,
    pub distance_m: f64,
}

pub const CONFLICT_METERS: f64 = 10.0;

impl StationRegistry {
    pub fn new(mut stations: Vec<Station>) -> Result<Self> {
        stations.sort_by_key(|s| s.id);
        if let Some(w) = stations.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Data(format!("duplicate station id {}", w[0].id)));
        }
        Ok(StationRegistry { stations })
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn stations_mut(&mut self) -> &mut [Station] {
        &mut self.stations
    }

    pub fn ids(&self) -> Vec<u64> {
        self.stations.iter().map(|s| s.id).collect()
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.stations.binary_search_by_key(&id, |s| s.id).ok()
    }

    /// Up to `n` registry ids closest in value to `id`.
    pub fn nearest_ids(&self, id: u64, n: usize) -> Vec<u64> {
        let mut ids = self.ids();
        ids.sort_by_key(|&x| (x.abs_diff(id), x));
        ids.truncate(n);
        ids
    }

    /// Keep the stations at the given axis positions (re-sorted by id).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.stations[i].clone()).collect())
    }

    pub fn write_entries(&self, c: &mut Container) {
        let n = self.len();
        c.push(NamedArray::vector(
            "registry.ids",
            self.stations.iter().map(|s| s.id as f64).collect(),
        ));
        c.push(NamedArray::matrix(
            "registry.coords",
            &Matrix::from_fn(n, 2, |i, j| {
                let s = &self.stations[i];
                if j == 0 {
                    s.lat
                } else {
                    s.lon
                }
            }),
        ));
        c.push(NamedArray::matrix(
            "registry.poi",
            &Matrix::from_fn(n, POI_CATEGORIES, |i, j| self.stations[i].poi[j] as f64),
        ));
    }

    pub fn read_entries(c: &Container) -> Result<Self> {
        let ids = &c.require("registry.ids")?.data;
        let coords = c.require("registry.coords")?.to_matrix()?;
        let poi = c.require("registry.poi")?.to_matrix()?;
        let n = ids.len();
        if coords.shape() != [n, 2] || poi.shape() != [n, POI_CATEGORIES] {
            return Err(Error::Format("registry entries disagree on station count".into()));
        }
        let mut stations = Vec::with_capacity(n);
        for (i, &id) in ids.iter().enumerate() {
            let mut counts = [0u32; POI_CATEGORIES];
            for (j, slot) in counts.iter_mut().enumerate() {
                *slot = poi.get(i, j) as u32;
            }
            stations.push(Station {
                id: id as u64,
                lat: coords.get(i, 0),
                lon: coords.get(i, 1),
                poi: counts,
            });
        }
        let reg = Self::new(stations)?;
        if reg.ids().iter().zip(ids).any(|(a, &b)| *a as f64 != b) {
            return Err(Error::Format("registry ids are not in ascending order".into()));
        }
        Ok(reg)
    }
}

/// Stations present in every file, ordered by id, with coordinates from
/// their first appearance across the files in order.
pub fn build_registry(files: &[TripFile]) -> Result<(StationRegistry, Vec<CoordConflict>)> {
    if files.is_empty() {
        return Err(Error::Data("no trip files given".into()));
    }
    let mut common: Option<BTreeSet<u64>> = None;
    let mut per_file = Vec::with_capacity(files.len());
    for f in files {
        let ids: BTreeSet<u64> = f
            .trips
            .iter()
            .flat_map(|t| [t.start_station, t.end_station])
            .collect();
        per_file.push(format!("{}: {} stations", f.path.display(), ids.len()));
        common = Some(match common {
            None => ids,
            Some(c) => c.intersection(&ids).copied().collect(),
        });
    }
    let common = common.unwrap_or_default();
    if common.is_empty() {
        return Err(Error::Data(format!(
            "no station appears in every trip file ({})",
            per_file.join("; ")
        )));
    }

    let mut first: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    let mut conflicts: BTreeMap<u64, f64> = BTreeMap::new();
    for t in files.iter().flat_map(|f| &f.trips) {
        for (id, lat, lon) in [
            (t.start_station, t.start_lat, t.start_lon),
            (t.end_station, t.end_lat, t.end_lon),
        ] {
            if !common.contains(&id) {
                continue;
            }
            let (lat0, lon0) = *first.entry(id).or_insert((lat, lon));
            let d = haversine_m(lat0, lon0, lat, lon);
            if d > CONFLICT_METERS {
                let worst = conflicts.entry(id).or_insert(0.0);
                *worst = worst.max(d);
            }
        }
    }
    let stations = common
        .iter()
        .map(|&id| {
            let (lat, lon) = first[&id];
            Station {
                id,
                lat,
                lon,
                poi: [0; POI_CATEGORIES],
            }
        })
        .collect();
    let conflicts = conflicts
        .into_iter()
        .map(|(station, distance_m)| CoordConflict { station, distance_m })
        .collect();
    Ok((StationRegistry::new(stations)?, conflicts))
}
