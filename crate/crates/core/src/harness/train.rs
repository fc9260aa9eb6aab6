//! The training loop and the `train` command behind it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use crate::data::frames::WindowSet;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::Forecaster;
use crate::optim::{clip_gradients, AdamConfig, AdamState, ClipMode};
use crate::tensor::Matrix;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const BEST_CHECKPOINT: &str = "best.stattn";
pub const FINAL_CHECKPOINT: &str = "final.stattn";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    /// A rate of 0 runs forward and backward but skips the update.
    pub lr: f64,
    pub clip: f64,
    pub clip_mode: ClipMode,
    pub batch: usize,
    pub seed: u64,
    pub max_iterations: Option<usize>,
}

impl TrainSettings {
    pub fn from_config(cfg: &RunConfig, seed: u64) -> Self {
        TrainSettings {
            epochs: cfg.epochs,
            lr: cfg.lr,
            clip: cfg.clip,
            clip_mode: cfg.clip_mode,
            batch: cfg.batch,
            seed,
            max_iterations: cfg.max_iterations,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer iterations so far, across epochs.
    pub iterations: usize,
    /// Mean of the batch losses seen during the epoch.
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

impl EpochRecord {
    pub fn manifest_line(&self) -> String {
        let mut s = format!(
            "epoch={} iterations={} train_loss={}",
            self.epoch, self.iterations, self.train_loss
        );
        if let Some(v) = self.validation_loss {
            let _ = write!(s, " validation_loss={v}");
        }
        s
    }
}

fn graph_seed(seed: u64, iteration: usize) -> u64 {
    seed ^ (iteration as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Train `model` on `train` with Adam and gradient clipping. Windows are
/// reshuffled every epoch from a generator seeded once with
/// `settings.seed`. `on_epoch` runs after every epoch, validation included.
pub fn fit(
    model: &mut Forecaster,
    adam: &mut AdamState,
    train: &WindowSet,
    validation: Option<&WindowSet>,
    settings: &TrainSettings,
    mut on_epoch: impl FnMut(&EpochRecord, &Forecaster, &AdamState) -> Result<()>,
) -> Result<Vec<EpochRecord>> {
    if train.is_empty() {
        return Err(Error::Data("no training windows".into()));
    }
    if settings.batch == 0 {
        return Err(Error::Config("batch must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut records = Vec::with_capacity(settings.epochs.min(1024));
    let mut iteration = 0;
    let limit = settings.max_iterations.unwrap_or(usize::MAX);
    for epoch in 1..=settings.epochs {
        if iteration >= limit {
            break;
        }
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(settings.batch).enumerate() {
            if iteration >= limit {
                break;
            }
            let batch = train.batch(chunk)?;
            model.params.zero_grad();
            let loss = model
                .accumulate_gradients(&batch, true, graph_seed(settings.seed, iteration))
                .map_err(|e| match e {
                    Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, batch {b}: {m}")),
                    other => other,
                })?;
            clip_gradients(&mut model.params, settings.clip, settings.clip_mode)
                .map_err(|e| Error::Numeric(format!("epoch {epoch}, batch {b}: {e}")))?;
            if settings.lr > 0.0 {
                adam.update(&mut model.params, settings.lr)?;
            }
            total += loss;
            batches += 1;
            iteration += 1;
        }
        let validation_loss = match validation {
            Some(v) if !v.is_empty() => Some(window_rmse(model, v, settings.batch)?),
            _ => None,
        };
        let rec = EpochRecord {
            epoch,
            iterations: iteration,
            train_loss: total / batches as f64,
            validation_loss,
        };
        log::info!("{}", rec.manifest_line());
        on_epoch(&rec, model, adam)?;
        records.push(rec);
    }
    Ok(records)
}

/// Predictions for every window of `set`, one row per window, `τ·N` wide.
pub fn predict_windows(model: &Forecaster, set: &WindowSet, batch: usize) -> Result<Matrix> {
    let width = model.config.decoder_steps * model.config.stations;
    let mut out = Matrix::zeros(set.len(), width);
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let b = set.batch(chunk)?;
        let (pred, _) = model.predict(&b.inputs)?;
        for (r, &i) in chunk.iter().enumerate() {
            out.row_slice_mut(i).copy_from_slice(pred.row_slice(r));
        }
    }
    Ok(out)
}

/// RMSE over every window, step and station of `set`.
pub fn window_rmse(model: &Forecaster, set: &WindowSet, batch: usize) -> Result<f64> {
    let idx: Vec<usize> = (0..set.len()).collect();
    let (mut sq, mut n) = (0.0, 0usize);
    for chunk in idx.chunks(batch.max(1)) {
        let b = set.batch(chunk)?;
        let (pred, _) = model.predict(&b.inputs)?;
        for (p, t) in pred.as_slice().iter().zip(b.targets.as_slice()) {
            sq += (p - t) * (p - t);
        }
        n += pred.len();
    }
    if n == 0 {
        return Err(Error::Data("no windows to score".into()));
    }
    Ok((sq / n as f64).sqrt())
}

/// What a finished `train` run produced.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochRecord>,
    pub best_checkpoint: PathBuf,
    pub final_checkpoint: PathBuf,
    pub manifest: PathBuf,
    pub final_loss: f64,
}

struct Manifest {
    path: PathBuf,
    header: String,
    lines: Vec<String>,
}

impl Manifest {
    fn write(&self, status: &str) -> Result<()> {
        let mut text = self.header.clone();
        for l in &self.lines {
            text.push_str(l);
            text.push('\n');
        }
        let _ = writeln!(text, "status={status}");
        fs::write(&self.path, text).map_err(|e| Error::io(&self.path, e))
    }
}

/// The `train` command: build the configured variant for `dataset`, train
/// it, and write the manifest plus best and final checkpoints to `cfg.out`.
/// A failed run keeps the manifest with the epochs finished so far.
pub fn run_training(cfg: &RunConfig, seed: u64, dataset: &Dataset, dataset_hash: &str) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model_cfg = cfg.model.clone();
    model_cfg.stations = dataset.stations();
    model_cfg.features_per_station = crate::data::FEATURES_PER_STATION;
    let [train, validation, _] = dataset.window_sets(
        model_cfg.target,
        model_cfg.encoder_steps,
        model_cfg.decoder_steps,
        cfg.validation_fraction,
    )?;
    let mut model = Forecaster::new(model_cfg, seed)?;
    let mut adam = AdamState::new(&model.params, AdamConfig::default());
    let out = &cfg.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut header = String::from("# run manifest\n[config]\n");
    header.push_str(&cfg.to_kv().to_text());
    header.push_str("[run]\n");
    let _ = writeln!(header, "seed={seed}");
    let _ = writeln!(header, "dataset_hash={dataset_hash}");
    let _ = writeln!(header, "stations={}", dataset.stations());
    let _ = writeln!(header, "train_windows={}", train.len());
    let _ = writeln!(header, "validation_windows={}", validation.len());
    let _ = writeln!(header, "parameters={}", model.num_scalars());
    header.push_str("[epochs]\n");
    let mut manifest = Manifest { path: out.join(MANIFEST_FILE), header, lines: Vec::new() };
    manifest.write("running")?;

    let ids = dataset.registry.ids();
    let best_path = out.join(BEST_CHECKPOINT);
    let final_path = out.join(FINAL_CHECKPOINT);
    let mut best = f64::INFINITY;
    let settings = TrainSettings::from_config(cfg, seed);
    let result = fit(&mut model, &mut adam, &train, Some(&validation), &settings, |rec, m, a| {
        manifest.lines.push(rec.manifest_line());
        let score = rec.validation_loss.unwrap_or(rec.train_loss);
        if score < best {
            best = score;
            Checkpoint::save(&best_path, m, Some(a), &ids, rec.epoch)?;
        }
        manifest.write("running")
    });
    let epochs = match result {
        Ok(e) => e,
        Err(e) => {
            manifest.write(&format!("aborted: {e}"))?;
            return Err(e);
        }
    };
    let last = epochs.last().map_or(0, |r| r.epoch);
    Checkpoint::save(&final_path, &model, Some(&adam), &ids, last)?;
    manifest.write("completed")?;
    Ok(TrainOutcome {
        final_loss: epochs.last().map_or(f64::NAN, |r| r.train_loss),
        epochs,
        best_checkpoint: best_path,
        final_checkpoint: final_path,
        manifest: manifest.path.clone(),
    })
}

/// Epoch lines of a manifest file.
pub fn manifest_epochs(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().filter(|l| l.starts_with("epoch=")).map(str::to_string).collect())
}
