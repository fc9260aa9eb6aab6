//! Station-level bike-share forecasting with spatial and temporal attention.
//!
//! The crate is self-contained: a small reverse-mode autodiff engine over
//! `f64` matrices ([`graph`]), LSTM and GRU cells ([`rnn`]), the two
//! attention mechanisms ([`attention`]), the encoder-decoder forecaster
//! ([`model`]), the ingestion pipeline ([`data`]) and the training and
//! evaluation harness ([`harness`]).

pub mod attention;
pub mod container;
pub mod data;
pub mod error;
pub mod graph;
pub mod harness;
pub mod kv;
pub mod model;
pub mod optim;
pub mod params;
pub mod rnn;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{Axis, Graph, Var};
pub use model::{ForecastBatch, Forecaster, ModelConfig, Variant};
pub use tensor::Matrix;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/autodiff.md")]
mod autodiff {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cells.md")]
mod cells {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/attention.md")]
mod attention_guide {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/model.md")]
mod model_guide {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/data.md")]
mod data_guide {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/training.md")]
mod training {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
