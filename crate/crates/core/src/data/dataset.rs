//! The processed dataset: everything needed to assemble frames, stored in
//! one container file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::frames::{FrameSource, WindowSet};
use super::poi::{count_pois, read_pois, CategoryMap, PoiReport, POI_CATEGORIES};
use super::registry::{build_registry, CoordConflict, StationRegistry};
use super::scaling::{MinMax, Scaling, COORDINATE_UPPER, PRECIPITATION_UPPER};
use super::traffic::{bucket_traffic, BucketSkips, HourAxis};
use super::trips::read_trips;
use super::weather::{aggregate_weather, align_weather, read_weather, WeatherColumns};
use super::windows::{assemble_windows, Split, WindowPlan};
use super::{format_month, month_of, TrafficKind, FEATURES_PER_STATION};
use crate::container::{Container, NamedArray};
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::tensor::Matrix;

pub const DATASET_FILE: &str = "dataset.stattn";
pub const HASH_FILE: &str = "hash.txt";
pub const SKIP_REPORT_FILE: &str = "skip_report.txt";

/// Hex SHA-256 of `bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Hex SHA-256 of a file's contents.
pub fn file_hash(path: &Path) -> Result<String> {
    Ok(content_hash(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Stored components of the processed dataset.
///
/// Frames are not stored; [`Dataset::frame_source`] assembles them from the
/// counts, the raw weather and the frozen scaling.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub registry: StationRegistry,
    pub hours: HourAxis,
    /// `hours × N`
    pub pickups: Matrix,
    /// `hours × N`
    pub dropoffs: Matrix,
    /// `hours × 3` raw temperature, precipitation, wind.
    pub weather: Matrix,
    pub scaling: Scaling,
    pub train_months: Vec<u32>,
    pub test_months: Vec<u32>,
}

impl Dataset {
    /// Fits the scaling on the training months and checks shapes.
    pub fn new(
        registry: StationRegistry,
        hours: HourAxis,
        pickups: Matrix,
        dropoffs: Matrix,
        weather: Matrix,
        train_months: Vec<u32>,
        test_months: Vec<u32>,
    ) -> Result<Self> {
        let train_rows: Vec<usize> = (0..hours.len())
            .filter(|&r| train_months.contains(&month_of(hours.hours()[r])))
            .collect();
        if train_rows.is_empty() {
            return Err(Error::Data(format!(
                "no hours fall in the training months {}",
                train_months.iter().map(|&m| format_month(m)).collect::<Vec<_>>().join(", ")
            )));
        }
        let scaling = Scaling {
            precipitation: MinMax::fit("precipitation", train_rows.iter().map(|&r| weather.get(r, 1)), PRECIPITATION_UPPER),
            longitude: MinMax::fit("longitude", registry.stations().iter().map(|s| s.lon), COORDINATE_UPPER),
            latitude: MinMax::fit("latitude", registry.stations().iter().map(|s| s.lat), COORDINATE_UPPER),
        };
        let ds = Dataset {
            registry,
            hours,
            pickups,
            dropoffs,
            weather,
            scaling,
            train_months,
            test_months,
        };
        ds.check()?;
        Ok(ds)
    }

    fn check(&self) -> Result<()> {
        let (h, n) = (self.hours.len(), self.registry.len());
        for (name, m, cols) in [("pickups", &self.pickups, n), ("dropoffs", &self.dropoffs, n), ("weather", &self.weather, 3)] {
            if m.shape() != [h, cols] {
                return Err(Error::Format(format!("{name} is {:?}, expected {:?}", m.shape(), [h, cols])));
            }
        }
        Ok(())
    }

    pub fn stations(&self) -> usize {
        self.registry.len()
    }

    pub fn counts(&self, kind: TrafficKind) -> &Matrix {
        match kind {
            TrafficKind::Pickup => &self.pickups,
            TrafficKind::Dropoff => &self.dropoffs,
        }
    }

    /// Frames whose traffic feature and targets are `kind` counts.
    pub fn frame_source(&self, kind: TrafficKind) -> FrameSource {
        let counts = self.counts(kind).clone();
        let sc = &self.scaling;
        let hourly = Matrix::from_fn(self.hours.len(), 3, |r, j| {
            let v = self.weather.get(r, j);
            if j == 1 {
                sc.precipitation.apply(v)
            } else {
                v
            }
        });
        let stations = self.registry.stations();
        let statics = Matrix::from_fn(stations.len(), POI_CATEGORIES + 2, |i, j| match j {
            j if j < POI_CATEGORIES => stations[i].poi[j] as f64,
            j if j == POI_CATEGORIES => sc.longitude.apply(stations[i].lon),
            _ => sc.latitude.apply(stations[i].lat),
        });
        let source = FrameSource::new(counts.clone(), hourly, statics, counts).expect("dataset shapes checked");
        debug_assert_eq!(source.features_per_station(), FEATURES_PER_STATION);
        source
    }

    pub fn split(&self, validation_fraction: f64) -> Split {
        Split {
            train_months: self.train_months.clone(),
            test_months: self.test_months.clone(),
            validation_fraction,
        }
    }

    pub fn window_plan(&self, encoder_steps: usize, decoder_steps: usize, validation_fraction: f64) -> WindowPlan {
        assemble_windows(
            &self.hours.segments(),
            encoder_steps,
            decoder_steps,
            &self.split(validation_fraction),
        )
    }

    /// Training, validation and test windows sharing one frame source.
    pub fn window_sets(
        &self,
        kind: TrafficKind,
        encoder_steps: usize,
        decoder_steps: usize,
        validation_fraction: f64,
    ) -> Result<[WindowSet; 3]> {
        let plan = self.window_plan(encoder_steps, decoder_steps, validation_fraction);
        let src = Arc::new(self.frame_source(kind));
        let set = |starts| WindowSet::new(src.clone(), starts, encoder_steps, decoder_steps);
        Ok([set(plan.train)?, set(plan.validation)?, set(plan.test)?])
    }

    /// Per-station totals of `kind` over the training months.
    pub fn training_totals(&self, kind: TrafficKind) -> Vec<f64> {
        let counts = self.counts(kind);
        let mut totals = vec![0.0; self.stations()];
        for (r, &h) in self.hours.hours().iter().enumerate() {
            if self.train_months.contains(&month_of(h)) {
                for (t, v) in totals.iter_mut().zip(counts.row_slice(r)) {
                    *t += v;
                }
            }
        }
        totals
    }

    /// `count` stations spread evenly over the ranking by training-period
    /// pick-ups (descending, ties by id): positions `⌊i·N/count⌋`. The
    /// result is re-sorted by id and keeps the frozen scaling.
    pub fn subset(&self, count: usize) -> Result<Self> {
        let n = self.stations();
        if count == 0 || count > n {
            return Err(Error::Config(format!("subset count {count} must be in 1..={n}")));
        }
        let indices = subset_indices(&self.training_totals(TrafficKind::Pickup), &self.registry.ids(), count);
        let mut sorted = indices;
        sorted.sort_unstable();
        Ok(Dataset {
            registry: self.registry.select(&sorted)?,
            hours: self.hours.clone(),
            pickups: self.pickups.select_cols(&sorted),
            dropoffs: self.dropoffs.select_cols(&sorted),
            weather: self.weather.clone(),
            scaling: self.scaling,
            train_months: self.train_months.clone(),
            test_months: self.test_months.clone(),
        })
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        c.push(NamedArray::scalar("dataset.stations", self.stations() as f64));
        c.push(NamedArray::scalar("dataset.features_per_station", FEATURES_PER_STATION as f64));
        c.push(NamedArray::vector(
            "dataset.hours",
            self.hours.hours().iter().map(|&h| h as f64).collect(),
        ));
        c.push(NamedArray::vector(
            "dataset.train_months",
            self.train_months.iter().map(|&m| m as f64).collect(),
        ));
        c.push(NamedArray::vector(
            "dataset.test_months",
            self.test_months.iter().map(|&m| m as f64).collect(),
        ));
        self.registry.write_entries(&mut c);
        self.scaling.write_entries(&mut c);
        c.push(NamedArray::matrix("dataset.pickups", &self.pickups));
        c.push(NamedArray::matrix("dataset.dropoffs", &self.dropoffs));
        c.push(NamedArray::matrix("dataset.weather", &self.weather));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let months = |name| -> Result<Vec<u32>> { Ok(c.require(name)?.data.iter().map(|&v| v as u32).collect()) };
        let ds = Dataset {
            registry: StationRegistry::read_entries(c)?,
            hours: HourAxis::new(c.require("dataset.hours")?.data.iter().map(|&v| v as i64).collect()),
            pickups: c.require("dataset.pickups")?.to_matrix()?,
            dropoffs: c.require("dataset.dropoffs")?.to_matrix()?,
            weather: c.require("dataset.weather")?.to_matrix()?,
            scaling: Scaling::read_entries(c)?,
            train_months: months("dataset.train_months")?,
            test_months: months("dataset.test_months")?,
        };
        if c.scalar("dataset.stations")? as usize != ds.stations() {
            return Err(Error::Format("dataset.stations disagrees with the registry".into()));
        }
        ds.check()?;
        Ok(ds)
    }

    /// Writes the dataset file and its hash into `dir`; returns the hash.
    pub fn save(&self, dir: &Path) -> Result<String> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let bytes = self.to_container().to_bytes();
        let path = dir.join(DATASET_FILE);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        let hash = content_hash(&bytes);
        let hpath = dir.join(HASH_FILE);
        fs::write(&hpath, format!("{hash}  {DATASET_FILE}\n")).map_err(|e| Error::io(&hpath, e))?;
        Ok(hash)
    }

    /// Loads `dir/dataset.stattn` (or `dir` itself when it is a file) and
    /// returns it with its content hash.
    pub fn load(dir: &Path) -> Result<(Self, String)> {
        let path = dataset_path(dir);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let ds = Self::from_container(&Container::from_bytes(&bytes)?)?;
        Ok((ds, content_hash(&bytes)))
    }
}

pub fn dataset_path(dir: &Path) -> PathBuf {
    if dir.is_file() {
        dir.to_path_buf()
    } else {
        dir.join(DATASET_FILE)
    }
}

/// Axis positions chosen by [`Dataset::subset`], in ranking order.
pub fn subset_indices(totals: &[f64], ids: &[u64], count: usize) -> Vec<usize> {
    let n = totals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| totals[b].total_cmp(&totals[a]).then(ids[a].cmp(&ids[b])));
    (0..count).map(|i| order[i * n / count]).collect()
}

/// Inputs to [`ingest`].
#[derive(Clone, Debug)]
pub struct IngestInputs {
    pub trips: Vec<PathBuf>,
    pub weather: PathBuf,
    pub pois: PathBuf,
    /// Column names and POI categories; the shipped mapping when `None`.
    pub mapping: Option<KeyValues>,
    pub train_months: Vec<u32>,
    pub test_months: Vec<u32>,
    pub radius_m: f64,
}

/// What ingestion dropped or could not reconcile.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SkipReport {
    /// Per trip file: (path, rows, skipped rows, sample reasons).
    pub trip_files: Vec<(String, usize, usize, Vec<String>)>,
    pub pickups: BucketSkips,
    pub dropoffs: BucketSkips,
    pub weather_rows: usize,
    pub poi_rows: usize,
    pub poi: PoiReport,
    pub conflicts: Vec<CoordConflict>,
    pub short_months: Vec<u32>,
}

impl SkipReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (path, rows, skipped, samples) in &self.trip_files {
            let _ = writeln!(s, "trips {path}: {skipped} of {rows} rows skipped");
            for r in samples {
                let _ = writeln!(s, "  {r}");
            }
        }
        for (kind, b) in [("pickup", &self.pickups), ("dropoff", &self.dropoffs)] {
            let _ = writeln!(
                s,
                "{kind}: {} trips at unregistered stations, {} outside the hour axis",
                b.unknown_station, b.outside_axis
            );
        }
        let _ = writeln!(s, "weather: {} rows skipped", self.weather_rows);
        let _ = writeln!(s, "poi: {} rows skipped", self.poi_rows);
        let _ = writeln!(s, "poi: {} stations without any POI", self.poi.stations_without_poi);
        for (label, n) in &self.poi.unmapped {
            let _ = writeln!(s, "poi other: {label} {n}");
        }
        for c in &self.conflicts {
            let _ = writeln!(s, "station {} coordinates disagree by {:.1} m", c.station, c.distance_m);
        }
        for m in &self.short_months {
            let _ = writeln!(s, "month {} has a segment too short for a window", format_month(*m));
        }
        s
    }
}

/// Run the full pipeline from raw files to a [`Dataset`].
pub fn ingest(inputs: &IngestInputs) -> Result<(Dataset, SkipReport)> {
    if inputs.trips.is_empty() {
        return Err(Error::Data("no trip files matched".into()));
    }
    let mapping = match &inputs.mapping {
        Some(kv) => kv.clone(),
        None => KeyValues::parse(super::poi::DEFAULT_MAPPING)?,
    };
    let mut paths = inputs.trips.clone();
    paths.sort();
    let files = paths.iter().map(|p| read_trips(p)).collect::<Result<Vec<_>>>()?;
    let mut report = SkipReport {
        trip_files: files
            .iter()
            .map(|f| (f.path.display().to_string(), f.rows, f.skipped, f.skip_samples.clone()))
            .collect(),
        ..SkipReport::default()
    };

    let (mut registry, conflicts) = build_registry(&files)?;
    report.conflicts = conflicts;
    let all = || files.iter().flat_map(|f| &f.trips);
    let hours = HourAxis::from_trips(all());
    let (pickups, ps) = bucket_traffic(all(), &registry, &hours, TrafficKind::Pickup);
    let (dropoffs, ds) = bucket_traffic(all(), &registry, &hours, TrafficKind::Dropoff);
    report.pickups = ps;
    report.dropoffs = ds;

    let (readings, wskip) = read_weather(&inputs.weather, &WeatherColumns::from_mapping(&mapping))?;
    report.weather_rows = wskip;
    let weather = align_weather(&aggregate_weather(&readings)?, hours.hours())?;

    let map = CategoryMap::from_mapping(&mapping)?;
    let (pois, pskip) = read_pois(&inputs.pois, &map)?;
    report.poi_rows = pskip;
    let (counts, poi_report) = count_pois(&registry, &pois, inputs.radius_m);
    report.poi = poi_report;
    for (s, c) in registry.stations_mut().iter_mut().zip(counts) {
        s.poi = c;
    }

    let ds = Dataset::new(
        registry,
        hours,
        pickups,
        dropoffs,
        weather,
        inputs.train_months.clone(),
        inputs.test_months.clone(),
    )?;
    report.short_months = ds.window_plan(12, 1, 0.0).short_months;
    Ok((ds, report))
}

/// Save a dataset with its skip report; returns the content hash.
pub fn write_ingest(dir: &Path, ds: &Dataset, report: &SkipReport) -> Result<String> {
    let hash = ds.save(dir)?;
    let path = dir.join(SKIP_REPORT_FILE);
    fs::write(&path, report.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(hash)
}
