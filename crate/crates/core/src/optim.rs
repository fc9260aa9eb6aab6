//! Gradient clipping and the Adam optimizer.

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ClipMode {
    /// Rescale all gradients together so their joint L2 norm is at most the
    /// threshold.
    #[default]
    GlobalNorm,
    /// Clamp every gradient entry into `[-threshold, threshold]`.
    PerValue,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipReport {
    pub norm_before: f64,
    pub scale: f64,
}

/// Clip the store's gradients in place.
///
/// In global-norm mode the gradients are left bit-identical when their norm
/// is already within the threshold, and the rescaled norm never exceeds it,
/// so clipping twice is the same as clipping once.
pub fn clip_gradients(store: &mut ParamStore, threshold: f64, mode: ClipMode) -> Result<ClipReport> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::Invalid(format!("clip threshold must be positive, got {threshold}")));
    }
    for (_, p) in store.iter() {
        if !p.grad.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient in parameter {:?}",
                p.name
            )));
        }
    }
    let norm = store.grad_norm();
    match mode {
        ClipMode::GlobalNorm => {
            if norm <= threshold {
                return Ok(ClipReport { norm_before: norm, scale: 1.0 });
            }
            let originals: Vec<Matrix> = store.iter().map(|(_, p)| p.grad.clone()).collect();
            let mut scale = threshold / norm;
            loop {
                for (p, g) in store.iter_mut().zip(&originals) {
                    p.grad = g.map(|v| v * scale);
                }
                // rounding can leave the rescaled norm a few ulps high
                if store.grad_norm() <= threshold {
                    break;
                }
                scale *= 1.0 - 4.0 * f64::EPSILON;
            }
            Ok(ClipReport { norm_before: norm, scale })
        }
        ClipMode::PerValue => {
            for p in store.iter_mut() {
                for v in p.grad.as_mut_slice() {
                    *v = v.clamp(-threshold, threshold);
                }
            }
            Ok(ClipReport { norm_before: norm, scale: 1.0 })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter of one store.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first: Vec<Matrix>,
    pub second: Vec<Matrix>,
    pub step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|(_, p)| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect::<Vec<_>>()
        };
        AdamState {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    /// One bias-corrected Adam update using the store's current gradients.
    pub fn update(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Invalid(format!("learning rate must be positive, got {lr}")));
        }
        if self.first.len() != store.len() {
            return Err(Error::shape("adam state", &[self.first.len()], &[store.len()]));
        }
        let AdamConfig { beta1, beta2, eps } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, m), v) in store.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            if m.shape() != p.value.shape() {
                return Err(Error::shape("adam moments", &m.shape(), &p.value.shape()));
            }
            let grads = p.grad.as_slice();
            let values = p.value.as_mut_slice();
            for (((x, &g), mi), vi) in values
                .iter_mut()
                .zip(grads)
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
