//! `stattn` command-line harness: ingest, train, evaluate, subset and
//! plot-data export.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stattn::data::dataset::{ingest, write_ingest, IngestInputs};
use stattn::data::poi::DEFAULT_RADIUS_M;
use stattn::data::{parse_month, Dataset, TrafficKind};
use stattn::harness::evaluate::{run_evaluation, SplitName};
use stattn::harness::plot::run_plot_data;
use stattn::harness::train::run_training;
use stattn::harness::RunConfig;
use stattn::kv::KeyValues;
use stattn::{Error, Result, Variant};

#[derive(Parser)]
#[command(name = "stattn", version, about = "Station-level bike-share traffic forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a processed dataset from trip, weather and POI exports.
    Ingest(IngestArgs),
    /// Train one model variant as described by a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config file and STATTN_SEED.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        variant: Option<Variant>,
        /// pickup or dropoff
        #[arg(long)]
        target: Option<TrafficKind>,
        /// Overrides the config's data directory.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint on one split and export its predictions.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// train, validation or test
        #[arg(long, default_value = "test")]
        split: SplitName,
        /// Defaults to `eval-<split>` next to the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fraction of training windows held out for validation.
        #[arg(long, default_value_t = 0.2)]
        validation: f64,
    },
    /// Export one station's hourly series from a predictions CSV.
    PlotData {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        station: u64,
        /// First day, YYYY-MM-DD.
        #[arg(long)]
        from: String,
        /// Last day, YYYY-MM-DD, inclusive.
        #[arg(long)]
        to: String,
        /// Defaults to `station-<id>_<from>_<to>.csv` next to the predictions.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keep `count` stations spread evenly over the demand ranking.
    Subset {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        count: usize,
        /// Defaults to `<data>-subset-<count>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct IngestArgs {
    /// Trip CSV files or glob patterns, one or more.
    #[arg(long, required = true, num_args = 1..)]
    trips: Vec<String>,
    #[arg(long)]
    weather: PathBuf,
    #[arg(long)]
    pois: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Column names and POI category mapping; the shipped mapping by default.
    #[arg(long)]
    mapping: Option<PathBuf>,
    /// Comma-separated YYYY-MM months used for training and validation.
    #[arg(long, default_value = "2019-06,2019-07,2019-08")]
    train_months: String,
    /// Comma-separated YYYY-MM months used for testing.
    #[arg(long, default_value = "2019-10")]
    test_months: String,
    /// POI counting radius in meters.
    #[arg(long, default_value_t = DEFAULT_RADIUS_M)]
    radius: f64,
}

fn months(list: &str) -> Result<Vec<u32>> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_month(s.trim())).collect()
}

fn expand_trips(patterns: &[String]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for p in patterns {
        let matches = glob::glob(p).map_err(|e| Error::Config(format!("bad trip pattern {p:?}: {e}")))?;
        let before = paths.len();
        for m in matches {
            paths.push(m.map_err(|e| Error::Data(e.to_string()))?);
        }
        if paths.len() == before {
            return Err(Error::Data(format!("no trip files match {p:?}")));
        }
    }
    paths.sort();
    paths.dedup();
    Ok(paths)
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let IngestArgs { trips, weather, pois, out, mapping, train_months, test_months, radius } = args;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Config(format!("--radius must be positive, got {radius}")));
    }
    let inputs = IngestInputs {
        trips: expand_trips(&trips)?,
        weather,
        pois,
        mapping: mapping.as_deref().map(KeyValues::read).transpose()?,
        train_months: months(&train_months)?,
        test_months: months(&test_months)?,
        radius_m: radius,
    };
    let (ds, report) = ingest(&inputs)?;
    let hash = write_ingest(&out, &ds, &report)?;
    println!(
        "ingested {} trip files: {} stations, {} hours, hash {hash}",
        inputs.trips.len(),
        ds.stations(),
        ds.hours.len()
    );
    Ok(())
}

fn cmd_train(
    config: &Path,
    seed: Option<u64>,
    variant: Option<Variant>,
    target: Option<TrafficKind>,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = RunConfig::read(config)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    if let Some(v) = variant {
        cfg.model.set_variant(v);
    }
    if let Some(t) = target {
        cfg.model.target = t;
    }
    if data.is_some() {
        cfg.data = data;
    }
    if let Some(o) = out {
        cfg.out = o;
    }
    cfg.validate()?;
    let seed = cfg.resolved_seed()?;
    let data = cfg
        .data
        .clone()
        .ok_or_else(|| Error::Config("no dataset: set data in the config or pass --data".into()))?;
    let (ds, hash) = Dataset::load(&data)?;
    let outcome = run_training(&cfg, seed, &ds, &hash)?;
    println!(
        "trained {} for {} epochs, final train loss {}, manifest {}",
        cfg.model.variant().name(),
        outcome.epochs.len(),
        outcome.final_loss,
        outcome.manifest.display()
    );
    Ok(())
}

fn cmd_evaluate(checkpoint: &Path, data: &Path, split: SplitName, out: Option<PathBuf>, validation: f64) -> Result<()> {
    if !(0.0..1.0).contains(&validation) {
        return Err(Error::Config(format!("--validation must be in [0, 1), got {validation}")));
    }
    let out = out.unwrap_or_else(|| {
        let name = format!("eval-{}", format!("{split:?}").to_lowercase());
        checkpoint.parent().unwrap_or(Path::new(".")).join(name)
    });
    let (report, files) = run_evaluation(checkpoint, data, split, validation, &out)?;
    println!(
        "{} {}: RMSE {:.4} MAE {:.4} over {} predictions, written to {}",
        report.variant,
        report.target,
        report.rmse,
        report.mae,
        report.records,
        files.metrics.display()
    );
    Ok(())
}

fn cmd_plot_data(pred: &Path, station: u64, from: &str, to: &str, out: Option<PathBuf>) -> Result<()> {
    let out = out.unwrap_or_else(|| {
        pred.parent()
            .unwrap_or(Path::new("."))
            .join(format!("station-{station}_{from}_{to}.csv"))
    });
    let rows = run_plot_data(pred, station, from, to, &out)?;
    println!("wrote {rows} rows to {}", out.display());
    Ok(())
}

fn cmd_subset(data: &Path, count: usize, out: Option<PathBuf>) -> Result<()> {
    let (ds, _) = Dataset::load(data)?;
    let sub = ds.subset(count)?;
    let out = out.unwrap_or_else(|| {
        let name = data.file_name().map_or("data".into(), |n| n.to_string_lossy().into_owned());
        data.with_file_name(format!("{name}-subset-{count}"))
    });
    let hash = sub.save(&out)?;
    println!("kept {count} of {} stations in {}, hash {hash}", ds.stations(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Train { config, seed, variant, target, data, out } => cmd_train(&config, seed, variant, target, data, out),
        Command::Evaluate { checkpoint, data, split, out, validation } => cmd_evaluate(&checkpoint, &data, split, out, validation),
        Command::PlotData { pred, station, from, to, out } => cmd_plot_data(&pred, station, &from, &to, out),
        Command::Subset { data, count, out } => cmd_subset(&data, count, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // help and version requests are not failures
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
