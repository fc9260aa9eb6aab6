//! Per-hour feature frames and batches of windows drawn from them.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{FeatureTensor, ForecastBatch};
use crate::tensor::Matrix;

/// Columnar source of hourly frames.
///
/// Station `i`'s features at hour row `h` are its traffic count, then the
/// hour's shared covariates, then the station's static features:
/// `[traffic[h][i], hourly[h][..], statics[i][..]]`. Frames are assembled on
/// demand so the full `hours × N·s` tensor never has to exist at once.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSource {
    /// `hours × N`
    pub traffic: Matrix,
    /// `hours × a`, identical for every station within an hour.
    pub hourly: Matrix,
    /// `N × b`, identical for every hour.
    pub statics: Matrix,
    /// `hours × N` prediction targets.
    pub targets: Matrix,
}

impl FrameSource {
    pub fn new(traffic: Matrix, hourly: Matrix, statics: Matrix, targets: Matrix) -> Result<Self> {
        let [h, n] = traffic.shape();
        if hourly.rows() != h || targets.shape() != [h, n] || statics.rows() != n {
            return Err(Error::shape(
                "frame source",
                &[h, n],
                &[hourly.rows(), statics.rows(), targets.rows(), targets.cols()],
            ));
        }
        Ok(FrameSource { traffic, hourly, statics, targets })
    }

    pub fn hours(&self) -> usize {
        self.traffic.rows()
    }

    pub fn stations(&self) -> usize {
        self.traffic.cols()
    }

    pub fn features_per_station(&self) -> usize {
        1 + self.hourly.cols() + self.statics.cols()
    }

    /// `N·s`
    pub fn width(&self) -> usize {
        self.stations() * self.features_per_station()
    }

    pub fn write_frame(&self, row: usize, out: &mut [f64]) {
        let s = self.features_per_station();
        let hourly = self.hourly.row_slice(row);
        for i in 0..self.stations() {
            let dst = &mut out[i * s..(i + 1) * s];
            dst[0] = self.traffic.get(row, i);
            dst[1..1 + hourly.len()].copy_from_slice(hourly);
            dst[1 + hourly.len()..].copy_from_slice(self.statics.row_slice(i));
        }
    }

    pub fn frame(&self, row: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.width()];
        self.write_frame(row, &mut out);
        out
    }

    /// All frames, `hours × N·s`.
    pub fn frames(&self) -> Matrix {
        let mut m = Matrix::zeros(self.hours(), self.width());
        for r in 0..self.hours() {
            self.write_frame(r, m.row_slice_mut(r));
        }
        m
    }
}

/// A set of windows over a shared frame source.
#[derive(Clone, Debug)]
pub struct WindowSet {
    pub source: Arc<FrameSource>,
    pub starts: Vec<usize>,
    pub encoder_steps: usize,
    pub decoder_steps: usize,
}

impl WindowSet {
    pub fn new(source: Arc<FrameSource>, starts: Vec<usize>, encoder_steps: usize, decoder_steps: usize) -> Result<Self> {
        let span = encoder_steps + decoder_steps;
        if let Some(&bad) = starts.iter().find(|&&s| s + span > source.hours()) {
            return Err(Error::Invalid(format!(
                "window starting at row {bad} runs past {} hours",
                source.hours()
            )));
        }
        Ok(WindowSet { source, starts, encoder_steps, decoder_steps })
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Rows of the hour axis predicted by window `i`.
    pub fn target_rows(&self, i: usize) -> std::ops::Range<usize> {
        let s = self.starts[i] + self.encoder_steps;
        s..s + self.decoder_steps
    }

    /// Batch of the windows at positions `idx`.
    pub fn batch(&self, idx: &[usize]) -> Result<ForecastBatch> {
        if idx.is_empty() {
            return Err(Error::Invalid("empty batch".into()));
        }
        let (t, tau) = (self.encoder_steps, self.decoder_steps);
        let src = &self.source;
        let (k, n) = (src.width(), src.stations());
        let mut data = vec![0.0; idx.len() * t * k];
        let mut targets = Matrix::zeros(idx.len(), tau * n);
        for (b, &i) in idx.iter().enumerate() {
            let start = self.starts[i];
            for step in 0..t {
                let off = (b * t + step) * k;
                src.write_frame(start + step, &mut data[off..off + k]);
            }
            for (j, row) in self.target_rows(i).enumerate() {
                targets.row_slice_mut(b)[j * n..(j + 1) * n]
                    .copy_from_slice(src.targets.row_slice(row));
            }
        }
        Ok(ForecastBatch {
            inputs: FeatureTensor::new(idx.len(), t, k, data)?,
            targets,
        })
    }
}
