//! Spatial attention over flattened station features and temporal attention
//! over encoder hidden states.
//!
//! # Spatial
//!
//! For a batch element, the *window* holds every flattened feature's full
//! history: row `k` is feature `k` over the `T` encoder steps. Each feature
//! gets a score from the previous encoder state `s = [h; c]`
//!
//! ```text
//! score_k = vᵀ tanh(s · W + window_k · U + b)
//! ```
//!
//! and the weights are the softmax of the scores across all `N·s` features.
//! The encoder input at step `t` is the time-`t` feature slice multiplied
//! element-wise by those weights.
//!
//! A GRU carries no cell state, so for GRU models `s = h` and `W` has `hidden`
//! rows instead of `2·hidden`.
//!
//! # Temporal
//!
//! For decoder state `h'` and encoder states `h_1..h_T`,
//!
//! ```text
//! score_t = vᵀ tanh([h_t; h'] · W)
//! γ       = softmax(score)
//! d       = Σ_t γ_t [h_t; h']
//! ```
//!
//! The context `d` is `2·hidden` wide. Because the weights sum to one its
//! second half is `h'` itself, and it is computed that way.
//! [`ContextMode::HiddenOnly`] instead yields `Σ_t γ_t h_t`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Axis, Graph, Var};
use crate::params::{uniform_fan_in, ParamId, ParamStore};
use crate::rnn::RecurrentState;
use crate::tensor::Matrix;

#[derive(Clone, Debug)]
pub struct SpatialAttention {
    pub width: usize,
    pub state_dim: usize,
    pub steps: usize,
    /// `width × 1`
    pub v: ParamId,
    /// `state_dim × width`
    pub w_state: ParamId,
    /// `steps × width`
    pub u_time: ParamId,
    /// `1 × width`
    pub bias: ParamId,
}

impl SpatialAttention {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        state_dim: usize,
        steps: usize,
        width: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if width == 0 || steps == 0 || state_dim == 0 {
            return Err(Error::Invalid(format!(
                "spatial attention dims must be positive (width {width}, steps {steps}, state {state_dim})"
            )));
        }
        Ok(SpatialAttention {
            width,
            state_dim,
            steps,
            v: store.add(format!("{prefix}.v"), uniform_fan_in(width, 1, rng))?,
            w_state: store.add(format!("{prefix}.w_state"), uniform_fan_in(state_dim, width, rng))?,
            u_time: store.add(format!("{prefix}.u_time"), uniform_fan_in(steps, width, rng))?,
            bias: store.add(format!("{prefix}.b"), Matrix::zeros(1, width))?,
        })
    }

    pub fn num_scalars(&self) -> usize {
        self.width * (2 + self.state_dim + self.steps)
    }

    /// `window · U + b` for a stacked window of shape `B·K × T`. This part of
    /// the score does not depend on the encoder state, so it is computed once
    /// per sequence.
    pub fn project_window(&self, g: &mut Graph, store: &ParamStore, window: Var) -> Result<Var> {
        let [_, steps] = g.shape(window);
        if steps != self.steps {
            return Err(Error::shape("spatial window steps", &[steps], &[self.steps]));
        }
        let u = g.param(store, self.u_time);
        let b = g.param(store, self.bias);
        let uf = g.matmul(window, u)?;
        g.add(uf, b)
    }

    /// Scores `B × K` for the `K` features of each batch element, given the
    /// projected window from [`Self::project_window`].
    pub fn scores(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        projected: Var,
        prev: &RecurrentState,
        features: usize,
    ) -> Result<Var> {
        let state = match prev.c {
            Some(c) => g.concat(&[prev.h, c], Axis::Cols)?,
            None => prev.h,
        };
        let [batch, sd] = g.shape(state);
        if sd != self.state_dim {
            return Err(Error::shape("spatial attention state", &[sd], &[self.state_dim]));
        }
        let pr = g.shape(projected);
        if pr != [batch * features, self.width] {
            return Err(Error::shape(
                "spatial projected window",
                &pr,
                &[batch * features, self.width],
            ));
        }
        let w = g.param(store, self.w_state);
        let v = g.param(store, self.v);
        let sw = g.matmul(state, w)?;
        let sw = g.repeat_rows(sw, features);
        let pre = g.add(sw, projected)?;
        let act = g.tanh(pre);
        let s = g.matmul(act, v)?;
        g.reshape(s, batch, features)
    }
}

/// Softmax across the feature axis of `B × K` scores.
pub fn spatial_weights(g: &mut Graph, scores: Var) -> Result<Var> {
    g.softmax(scores, Axis::Cols)
}

/// Element-wise product of the time-`t` features and their weights.
pub fn spatial_reweight(g: &mut Graph, features_t: Var, weights: Var) -> Result<Var> {
    let (a, b) = (g.shape(features_t), g.shape(weights));
    if a != b {
        return Err(Error::shape("spatial reweight", &a, &b));
    }
    g.mul(features_t, weights)
}

/// How the temporal context combines encoder and decoder states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ContextMode {
    /// `d = Σ γ_t [h_t; h']`, width `2·hidden`.
    #[default]
    Concatenated,
    /// `d = Σ γ_t h_t`, width `hidden`.
    HiddenOnly,
}

impl ContextMode {
    pub fn width(self, hidden: usize) -> usize {
        match self {
            ContextMode::Concatenated => 2 * hidden,
            ContextMode::HiddenOnly => hidden,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TemporalAttention {
    pub width: usize,
    pub hidden: usize,
    /// `width × 1`
    pub v: ParamId,
    /// `2·hidden × width`
    pub w: ParamId,
}

impl TemporalAttention {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        hidden: usize,
        width: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if width == 0 || hidden == 0 {
            return Err(Error::Invalid(format!(
                "temporal attention dims must be positive (width {width}, hidden {hidden})"
            )));
        }
        Ok(TemporalAttention {
            width,
            hidden,
            v: store.add(format!("{prefix}.v"), uniform_fan_in(width, 1, rng))?,
            w: store.add(format!("{prefix}.w"), uniform_fan_in(2 * hidden, width, rng))?,
        })
    }

    pub fn num_scalars(&self) -> usize {
        self.width * (1 + 2 * self.hidden)
    }

    /// Scores `B × T`, one per encoder step.
    pub fn scores(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        encoder: &[Var],
        decoder_h: Var,
    ) -> Result<Var> {
        if encoder.is_empty() {
            return Err(Error::Invalid("temporal attention over zero encoder steps".into()));
        }
        let ds = g.shape(decoder_h);
        if ds[1] != self.hidden {
            return Err(Error::shape("temporal attention decoder state", &ds, &[ds[0], self.hidden]));
        }
        let w = g.param(store, self.w);
        let v = g.param(store, self.v);
        let mut cols = Vec::with_capacity(encoder.len());
        for &h in encoder {
            let hs = g.shape(h);
            if hs != ds {
                return Err(Error::shape("temporal attention encoder state", &hs, &ds));
            }
            let joint = g.concat(&[h, decoder_h], Axis::Cols)?;
            let pre = g.matmul(joint, w)?;
            let act = g.tanh(pre);
            cols.push(g.matmul(act, v)?);
        }
        g.concat(&cols, Axis::Cols)
    }
}

/// Softmax the scores and form the context. Returns `(d, γ)`.
pub fn temporal_context(
    g: &mut Graph,
    encoder: &[Var],
    decoder_h: Var,
    scores: Var,
    mode: ContextMode,
) -> Result<(Var, Var)> {
    let ss = g.shape(scores);
    if ss[1] != encoder.len() || encoder.is_empty() {
        return Err(Error::shape("temporal scores", &ss, &[ss[0], encoder.len()]));
    }
    let gamma = g.softmax(scores, Axis::Cols)?;
    let mut acc: Option<Var> = None;
    for (t, &h) in encoder.iter().enumerate() {
        let wt = g.slice(gamma, Axis::Cols, t, 1)?;
        let term = g.mul(wt, h)?;
        acc = Some(match acc {
            Some(a) => g.add(a, term)?,
            None => term,
        });
    }
    let weighted = acc.expect("non-empty encoder");
    let d = match mode {
        ContextMode::Concatenated => g.concat(&[weighted, decoder_h], Axis::Cols)?,
        ContextMode::HiddenOnly => weighted,
    };
    Ok((d, gamma))
}
