//! The forecaster: spatial-attention encoder, temporal-attention decoder and
//! a linear prediction head, plus the attention-free baseline.
//!
//! Data flow for one batch of `B` windows over `K = N·s` flattened features:
//!
//! 1. At every encoder step `t` the spatial attention scores all `K`
//!    features from the top encoder layer's previous state and the features'
//!    full window history, and the time-`t` slice is reweighted before it
//!    enters the stacked encoder.
//! 2. The decoder starts from the encoder's final states (layer by layer).
//!    Its first input is a learned `1 × N` start vector; later steps are fed
//!    the previous prediction.
//! 3. At every decoder step the temporal attention forms a context `d` from
//!    the encoder's top-layer hidden sequence and the head maps `[d; h']` to
//!    `N` predictions.
//!
//! Without attention the encoder sees the raw features and the head reads
//! `h'` alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{
    spatial_reweight, spatial_weights, temporal_context, ContextMode, SpatialAttention,
    TemporalAttention,
};
use crate::data::TrafficKind;
use crate::error::{Error, Result};
use crate::graph::{Axis, Graph, Var};
use crate::params::{uniform_fan_in, ParamId, ParamStore};
use crate::rnn::{CellKind, RecurrentState, StackedCell};
use crate::tensor::Matrix;

/// Which of the four model variants to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    LstmAttn,
    GruAttn,
    LstmBase,
    GruBase,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::LstmAttn,
        Variant::GruAttn,
        Variant::LstmBase,
        Variant::GruBase,
    ];

    pub fn cell(self) -> CellKind {
        match self {
            Variant::LstmAttn | Variant::LstmBase => CellKind::Lstm,
            Variant::GruAttn | Variant::GruBase => CellKind::Gru,
        }
    }

    pub fn attention(self) -> bool {
        matches!(self, Variant::LstmAttn | Variant::GruAttn)
    }

    pub fn from_parts(cell: CellKind, attention: bool) -> Self {
        match (cell, attention) {
            (CellKind::Lstm, true) => Variant::LstmAttn,
            (CellKind::Gru, true) => Variant::GruAttn,
            (CellKind::Lstm, false) => Variant::LstmBase,
            (CellKind::Gru, false) => Variant::GruBase,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::LstmAttn => "lstm-attn",
            Variant::GruAttn => "gru-attn",
            Variant::LstmBase => "lstm-base",
            Variant::GruBase => "gru-base",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant {s:?} (expected lstm-attn, gru-attn, lstm-base or gru-base)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub stations: usize,
    pub features_per_station: usize,
    pub encoder_steps: usize,
    pub decoder_steps: usize,
    pub hidden: usize,
    pub layers: usize,
    pub cell: CellKind,
    pub attention: bool,
    pub target: TrafficKind,
    pub dropout: f64,
    pub spatial_width: usize,
    pub temporal_width: usize,
    pub context: ContextMode,
    pub forget_bias: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            stations: 766,
            features_per_station: 19,
            encoder_steps: 12,
            decoder_steps: 1,
            hidden: 1024,
            layers: 2,
            cell: CellKind::Lstm,
            attention: true,
            target: TrafficKind::Pickup,
            dropout: 0.3,
            spatial_width: 128,
            temporal_width: 128,
            context: ContextMode::Concatenated,
            forget_bias: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn variant(&self) -> Variant {
        Variant::from_parts(self.cell, self.attention)
    }

    pub fn set_variant(&mut self, v: Variant) {
        self.cell = v.cell();
        self.attention = v.attention();
    }

    /// Flattened encoder input width `N·s`.
    pub fn input_width(&self) -> usize {
        self.stations * self.features_per_station
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("stations", self.stations),
            ("features_per_station", self.features_per_station),
            ("encoder_steps", self.encoder_steps),
            ("decoder_steps", self.decoder_steps),
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("spatial_width", self.spatial_width),
            ("temporal_width", self.temporal_width),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    fn head_input_width(&self) -> usize {
        if self.attention {
            self.context.width(self.hidden) + self.hidden
        } else {
            self.hidden
        }
    }
}

/// Input features, `batch × steps × width`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    batch: usize,
    steps: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureTensor {
    pub fn new(batch: usize, steps: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != batch * steps * width {
            return Err(Error::shape("feature tensor", &[batch, steps, width], &[data.len()]));
        }
        Ok(FeatureTensor {
            batch,
            steps,
            width,
            data,
        })
    }

    /// From one `steps × width` matrix per batch element.
    pub fn from_windows(windows: &[Matrix]) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::Invalid("empty batch".into()))?;
        let [steps, width] = first.shape();
        let mut data = Vec::with_capacity(windows.len() * steps * width);
        for w in windows {
            if w.shape() != [steps, width] {
                return Err(Error::shape("feature window", &w.shape(), &[steps, width]));
            }
            data.extend_from_slice(w.as_slice());
        }
        Self::new(windows.len(), steps, width, data)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, b: usize, t: usize, k: usize) -> f64 {
        self.data[(b * self.steps + t) * self.width + k]
    }

    /// Features at step `t` for the whole batch, `B × width`.
    pub fn step(&self, t: usize) -> Matrix {
        Matrix::from_fn(self.batch, self.width, |b, k| self.get(b, t, k))
    }

    /// Per-feature histories stacked over the batch, `B·width × steps`;
    /// row `b·width + k` is feature `k` of element `b` over time.
    pub fn window(&self) -> Matrix {
        Matrix::from_fn(self.batch * self.width, self.steps, |r, t| {
            self.get(r / self.width, t, r % self.width)
        })
    }

    /// One batch element as `steps × width`.
    pub fn element(&self, b: usize) -> Matrix {
        Matrix::from_fn(self.steps, self.width, |t, k| self.get(b, t, k))
    }
}

/// Inputs with targets `B × (τ·N)`: row `b` is step 0's `N` values followed
/// by step 1's and so on.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastBatch {
    pub inputs: FeatureTensor,
    pub targets: Matrix,
}

/// Attention weights extracted from a forward pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AttentionTrace {
    /// One `B × K` matrix per encoder step.
    pub spatial: Vec<Matrix>,
    /// One `B × T` matrix per decoder step.
    pub temporal: Vec<Matrix>,
}

impl AttentionTrace {
    /// Spatial weights of batch element `b` as `T × K`.
    pub fn spatial_for(&self, b: usize) -> Option<Matrix> {
        let rows: Vec<Vec<f64>> = self.spatial.iter().map(|m| m.row_slice(b).to_vec()).collect();
        if rows.is_empty() {
            return None;
        }
        Matrix::from_rows(&rows).ok()
    }

    /// Temporal weights of batch element `b` as `τ × T`.
    pub fn temporal_for(&self, b: usize) -> Option<Matrix> {
        let rows: Vec<Vec<f64>> = self.temporal.iter().map(|m| m.row_slice(b).to_vec()).collect();
        if rows.is_empty() {
            return None;
        }
        Matrix::from_rows(&rows).ok()
    }
}

pub struct EncoderOutput {
    /// Top-layer hidden state after each step, `B × hidden` each.
    pub hiddens: Vec<Var>,
    pub final_states: Vec<RecurrentState>,
    pub spatial_weights: Vec<Var>,
}

pub struct DecoderOutput {
    /// `B × N` per decoder step.
    pub predictions: Vec<Var>,
    pub temporal_weights: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct Forecaster {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub encoder: StackedCell,
    pub decoder: StackedCell,
    pub spatial: Option<SpatialAttention>,
    pub temporal: Option<TemporalAttention>,
    /// `1 × N`
    pub start: ParamId,
    /// `head_input × N`
    pub head_w: ParamId,
    /// `1 × N`
    pub head_b: ParamId,
}

impl Forecaster {
    /// Build the variant selected by `config` with freshly initialized
    /// parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let c = &config;
        let k = c.input_width();
        let encoder = StackedCell::init(
            &mut params, "enc", c.cell, k, c.hidden, c.layers, c.forget_bias, &mut rng,
        )?;
        let decoder = StackedCell::init(
            &mut params, "dec", c.cell, c.stations, c.hidden, c.layers, c.forget_bias, &mut rng,
        )?;
        let (spatial, temporal) = if c.attention {
            let state_dim = match c.cell {
                CellKind::Lstm => 2 * c.hidden,
                CellKind::Gru => c.hidden,
            };
            (
                Some(SpatialAttention::init(
                    &mut params, "enc.attn", state_dim, c.encoder_steps, c.spatial_width, &mut rng,
                )?),
                Some(TemporalAttention::init(
                    &mut params, "dec.attn", c.hidden, c.temporal_width, &mut rng,
                )?),
            )
        } else {
            (None, None)
        };
        let start = params.add("dec.start", uniform_fan_in(c.stations, 1, &mut rng).transpose())?;
        let hin = c.head_input_width();
        let head_w = params.add("head.w", uniform_fan_in(hin, c.stations, &mut rng))?;
        let head_b = params.add("head.b", Matrix::zeros(1, c.stations))?;
        Ok(Forecaster {
            config,
            params,
            encoder,
            decoder,
            spatial,
            temporal,
            start,
            head_w,
            head_b,
        })
    }

    /// Replace parameter values by name, checking every shape. All of the
    /// model's parameters must be present.
    pub fn load_values<'a>(&mut self, values: impl IntoIterator<Item = (&'a str, Matrix)>) -> Result<()> {
        let mut seen = vec![false; self.params.len()];
        for (name, m) in values {
            let Some(id) = self.params.id(name) else { continue };
            let cur = self.params.value(id).shape();
            if cur != m.shape() {
                return Err(Error::shape("loaded parameter", &m.shape(), &cur));
            }
            *self.params.value_mut(id) = m;
            seen[id.index()] = true;
        }
        if let Some((id, _)) = self.params.iter().find(|(id, _)| !seen[id.index()]) {
            return Err(Error::Format(format!(
                "missing parameter {:?}",
                self.params.get(id).name
            )));
        }
        Ok(())
    }

    pub fn num_scalars(&self) -> usize {
        self.params.num_scalars()
    }

    fn keep(&self) -> f64 {
        1.0 - self.config.dropout
    }

    pub fn encode(&self, g: &mut Graph, inputs: &FeatureTensor, training: bool) -> Result<EncoderOutput> {
        let c = &self.config;
        let k = c.input_width();
        if inputs.width() != k || inputs.steps() != c.encoder_steps {
            return Err(Error::shape(
                "encoder inputs",
                &[inputs.batch(), inputs.steps(), inputs.width()],
                &[inputs.batch(), c.encoder_steps, k],
            ));
        }
        let batch = inputs.batch();
        let projected = match &self.spatial {
            Some(sp) => {
                let window = g.constant(inputs.window());
                Some(sp.project_window(g, &self.params, window)?)
            }
            None => None,
        };
        let mut states = self.encoder.zero_states(g, batch);
        let mut hiddens = Vec::with_capacity(c.encoder_steps);
        let mut spatial_w = Vec::new();
        for t in 0..c.encoder_steps {
            let f_t = g.constant(inputs.step(t));
            let x = match (&self.spatial, projected) {
                (Some(sp), Some(proj)) => {
                    let top = states.last().expect("at least one layer");
                    let scores = sp.scores(g, &self.params, proj, top, k)?;
                    let w = spatial_weights(g, scores)?;
                    spatial_w.push(w);
                    spatial_reweight(g, f_t, w)?
                }
                _ => f_t,
            };
            states = self.encoder.step(g, &self.params, x, &states, self.keep(), training)?;
            hiddens.push(states.last().expect("at least one layer").h);
        }
        Ok(EncoderOutput {
            hiddens,
            final_states: states,
            spatial_weights: spatial_w,
        })
    }

    pub fn decode(
        &self,
        g: &mut Graph,
        enc: &EncoderOutput,
        steps: usize,
        training: bool,
    ) -> Result<DecoderOutput> {
        if steps == 0 {
            return Err(Error::Invalid("decoder needs at least one step".into()));
        }
        let batch = g.shape(enc.hiddens[0])[0];
        let start = g.param(&self.params, self.start);
        let w = g.param(&self.params, self.head_w);
        let b = g.param(&self.params, self.head_b);
        let mut input = g.repeat_rows(start, batch);
        let mut states = enc.final_states.clone();
        let mut predictions = Vec::with_capacity(steps);
        let mut temporal_w = Vec::new();
        for _ in 0..steps {
            states = self.decoder.step(g, &self.params, input, &states, self.keep(), training)?;
            let h = states.last().expect("at least one layer").h;
            let head_in = match &self.temporal {
                Some(tp) => {
                    let scores = tp.scores(g, &self.params, &enc.hiddens, h)?;
                    let (d, gamma) = temporal_context(g, &enc.hiddens, h, scores, self.config.context)?;
                    temporal_w.push(gamma);
                    g.concat(&[d, h], Axis::Cols)?
                }
                None => h,
            };
            let y = g.matmul(head_in, w)?;
            let y = g.add(y, b)?;
            predictions.push(y);
            input = y;
        }
        Ok(DecoderOutput {
            predictions,
            temporal_weights: temporal_w,
        })
    }

    /// Encoder then decoder for `config.decoder_steps` steps.
    pub fn forward(&self, g: &mut Graph, inputs: &FeatureTensor, training: bool) -> Result<(EncoderOutput, DecoderOutput)> {
        let enc = self.encode(g, inputs, training)?;
        let dec = self.decode(g, &enc, self.config.decoder_steps, training)?;
        Ok((enc, dec))
    }

    /// Root of the mean squared error over every batch element, decoder step
    /// and station.
    pub fn loss(&self, g: &mut Graph, predictions: &[Var], targets: &Matrix) -> Result<Var> {
        rmse_loss(g, predictions, targets)
    }

    /// Inference: predictions as `B × (τ·N)` plus the attention weights.
    pub fn predict(&self, inputs: &FeatureTensor) -> Result<(Matrix, AttentionTrace)> {
        let mut g = Graph::new(0);
        let (enc, dec) = self.forward(&mut g, inputs, false)?;
        let joined = g.concat(&dec.predictions, Axis::Cols)?;
        let trace = AttentionTrace {
            spatial: enc.spatial_weights.iter().map(|&v| g.value(v).clone()).collect(),
            temporal: dec.temporal_weights.iter().map(|&v| g.value(v).clone()).collect(),
        };
        Ok((g.value(joined).clone(), trace))
    }

    /// Forward, loss and backward for one batch; gradients are added onto
    /// the parameter store. Returns the loss value.
    pub fn accumulate_gradients(&mut self, batch: &ForecastBatch, training: bool, seed: u64) -> Result<f64> {
        let mut g = Graph::new(seed);
        let (_, dec) = self.forward(&mut g, &batch.inputs, training)?;
        let loss = self.loss(&mut g, &dec.predictions, &batch.targets)?;
        let value = g.value(loss).item()?;
        if !value.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {value}")));
        }
        g.backward(loss)?;
        g.accumulate_param_grads(&mut self.params);
        Ok(value)
    }

    /// Loss without gradients.
    pub fn evaluate_loss(&self, batch: &ForecastBatch) -> Result<f64> {
        let (pred, _) = self.predict(&batch.inputs)?;
        if pred.shape() != batch.targets.shape() {
            return Err(Error::shape("loss", &pred.shape(), &batch.targets.shape()));
        }
        let n = pred.len() as f64;
        let sq: f64 = pred
            .as_slice()
            .iter()
            .zip(batch.targets.as_slice())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        Ok((sq / n).sqrt())
    }
}

/// `sqrt(mean((prediction − target)²))` with the decoder steps joined along
/// the columns.
pub fn rmse_loss(g: &mut Graph, predictions: &[Var], targets: &Matrix) -> Result<Var> {
    let joined = g.concat(predictions, Axis::Cols)?;
    let ps = g.shape(joined);
    if ps != targets.shape() {
        return Err(Error::shape("loss", &ps, &targets.shape()));
    }
    let t = g.constant(targets.clone());
    let diff = g.sub(joined, t)?;
    let ms = g.mean_square(diff)?;
    g.sqrt(ms)
}
