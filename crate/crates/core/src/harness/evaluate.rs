//! The `evaluate` command: metrics, per-station-hour predictions and
//! averaged attention weights for one split.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::checkpoint::Checkpoint;
use super::metrics::{compute_metrics, MetricsReport, PredictionRecord};
use crate::data::dataset::{dataset_path, file_hash};
use crate::data::{format_hour, hour_index, parse_timestamp, Dataset, FEATURES_PER_STATION};
use crate::error::{Error, Result};

pub const METRICS_FILE: &str = "metrics.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const ATTENTION_FILE: &str = "attention.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "validation" | "val" => Ok(SplitName::Validation),
            "test" => Ok(SplitName::Test),
            _ => Err(Error::Config(format!("unknown split {s:?} (expected train, validation or test)"))),
        }
    }
}

/// Attention weights averaged over every window and step of a split.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionSummary {
    /// Mean spatial weight per flattened feature, length `N·s`.
    pub spatial: Vec<f64>,
    /// Mean temporal weight per encoder step, length `T`.
    pub temporal: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub records: Vec<PredictionRecord>,
    pub attention: Option<AttentionSummary>,
}

/// Score `checkpoint` on one split of `dataset`.
pub fn evaluate(
    checkpoint: &Checkpoint,
    dataset: &Dataset,
    split: SplitName,
    validation_fraction: f64,
    batch: usize,
) -> Result<Evaluation> {
    let model = &checkpoint.model;
    let cfg = &model.config;
    let ids = dataset.registry.ids();
    if cfg.stations != ids.len() || checkpoint.station_ids != ids {
        return Err(Error::Data(format!(
            "checkpoint was trained on {} stations, dataset has {}{}",
            cfg.stations,
            ids.len(),
            if cfg.stations == ids.len() { " with different ids" } else { "" }
        )));
    }
    if cfg.features_per_station != FEATURES_PER_STATION {
        return Err(Error::Data(format!(
            "checkpoint expects {} features per station, datasets carry {FEATURES_PER_STATION}",
            cfg.features_per_station
        )));
    }
    let [train, val, test] = dataset.window_sets(cfg.target, cfg.encoder_steps, cfg.decoder_steps, validation_fraction)?;
    let set = match split {
        SplitName::Train => train,
        SplitName::Validation => val,
        SplitName::Test => test,
    };
    if set.is_empty() {
        return Err(Error::Data(format!("the {split:?} split has no windows").to_lowercase()));
    }
    let n = cfg.stations;
    let hours = dataset.hours.hours();
    let mut records = Vec::with_capacity(set.len() * cfg.decoder_steps * n);
    let mut spatial = vec![0.0; cfg.input_width()];
    let mut temporal = vec![0.0; cfg.encoder_steps];
    let (mut spatial_rows, mut temporal_rows) = (0usize, 0usize);
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let b = set.batch(chunk)?;
        let (pred, trace) = model.predict(&b.inputs)?;
        for (r, &w) in chunk.iter().enumerate() {
            for (step, row) in set.target_rows(w).enumerate() {
                for (i, &station) in ids.iter().enumerate() {
                    let col = step * n + i;
                    records.push(PredictionRecord {
                        station,
                        hour: hours[row],
                        actual: b.targets.get(r, col),
                        predicted: pred.get(r, col),
                    });
                }
            }
        }
        for m in &trace.spatial {
            for r in 0..m.rows() {
                for (acc, v) in spatial.iter_mut().zip(m.row_slice(r)) {
                    *acc += v;
                }
            }
            spatial_rows += m.rows();
        }
        for m in &trace.temporal {
            for r in 0..m.rows() {
                for (acc, v) in temporal.iter_mut().zip(m.row_slice(r)) {
                    *acc += v;
                }
            }
            temporal_rows += m.rows();
        }
    }
    let attention = (cfg.attention && spatial_rows > 0).then(|| AttentionSummary {
        spatial: spatial.iter().map(|v| v / spatial_rows as f64).collect(),
        temporal: temporal.iter().map(|v| v / temporal_rows.max(1) as f64).collect(),
    });
    let report = compute_metrics(&records, cfg.variant().name(), cfg.target)?;
    Ok(Evaluation { report, records, attention })
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let csv_err = |e| Error::Csv { path: path.to_path_buf(), source: e };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["station-id", "hour", "actual", "predicted"]).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.station.to_string(),
            format_hour(r.hour),
            r.actual.to_string(),
            r.predicted.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let csv_err = |e| Error::Csv { path: path.to_path_buf(), source: e };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i as u64 + 2;
        let bad = |what: &str| Error::DataAt {
            path: path.to_path_buf(),
            line,
            message: format!("bad {what}"),
        };
        let field = |j: usize| rec.get(j).map(str::trim).unwrap_or("");
        out.push(PredictionRecord {
            station: field(0).parse().map_err(|_| bad("station-id"))?,
            hour: hour_index(&parse_timestamp(field(1)).ok_or_else(|| bad("hour"))?),
            actual: field(2).parse().map_err(|_| bad("actual"))?,
            predicted: field(3).parse().map_err(|_| bad("predicted"))?,
        });
    }
    Ok(out)
}

fn write_attention(path: &Path, summary: &AttentionSummary, ids: &[u64]) -> Result<()> {
    let mut text = String::from("kind,station-id,index,weight\n");
    let s = summary.spatial.len() / ids.len().max(1);
    for (k, w) in summary.spatial.iter().enumerate() {
        text.push_str(&format!("spatial,{},{},{w}\n", ids[k / s], k % s));
    }
    for (t, w) in summary.temporal.iter().enumerate() {
        text.push_str(&format!("temporal,,{t},{w}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Files written by [`run_evaluation`].
#[derive(Clone, Debug)]
pub struct EvaluationFiles {
    pub metrics: PathBuf,
    pub predictions: PathBuf,
    pub attention: Option<PathBuf>,
}

/// The `evaluate` command. Neither input file is modified; their hashes are
/// compared before and after as a guard.
pub fn run_evaluation(
    checkpoint_path: &Path,
    data: &Path,
    split: SplitName,
    validation_fraction: f64,
    out: &Path,
) -> Result<(MetricsReport, EvaluationFiles)> {
    let data_file = dataset_path(data);
    let before = (file_hash(checkpoint_path)?, file_hash(&data_file)?);
    let checkpoint = Checkpoint::load(checkpoint_path)?;
    let (dataset, _) = Dataset::load(data)?;
    let eval = evaluate(&checkpoint, &dataset, split, validation_fraction, 256)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let files = EvaluationFiles {
        metrics: out.join(METRICS_FILE),
        predictions: out.join(PREDICTIONS_FILE),
        attention: eval.attention.as_ref().map(|_| out.join(ATTENTION_FILE)),
    };
    fs::write(&files.metrics, eval.report.to_json()).map_err(|e| Error::io(&files.metrics, e))?;
    write_predictions(&files.predictions, &eval.records)?;
    if let (Some(path), Some(summary)) = (&files.attention, &eval.attention) {
        write_attention(path, summary, &dataset.registry.ids())?;
    }
    let after = (file_hash(checkpoint_path)?, file_hash(&data_file)?);
    if before != after {
        return Err(Error::Data("an input changed while it was being evaluated".into()));
    }
    Ok((eval.report, files))
}
