//! Training, evaluation and export: the pieces behind the command-line tool.

pub mod checkpoint;
pub mod config;
pub mod evaluate;
pub mod metrics;
pub mod plot;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use metrics::{compute_metrics, MetricsReport, PredictionRecord};
pub use train::{fit, EpochRecord, TrainSettings};
