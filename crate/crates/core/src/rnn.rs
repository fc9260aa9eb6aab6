//! LSTM and GRU cells and the stacked recurrent unit built from them.
//!
//! Cells work on a batch: inputs are `B × input_dim`, states `B × hidden`.
//! Weights are laid out so a step is `x · W_ih + h · W_hh + b` with the gate
//! blocks side by side along the columns:
//!
//! * LSTM: `[input | forget | candidate | output]`, each `hidden` wide.
//! * GRU: `[reset | update | candidate]`.
//!
//! The GRU follows `h' = (1 − z) ⊙ h + z ⊙ n` with
//! `n = tanh(x W_n + (r ⊙ h) U_n + b_n)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Axis, Graph, Var};
use crate::params::{uniform_fan_in, ParamId, ParamStore};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    pub fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }
}

#[derive(Clone, Debug)]
pub struct CellParams {
    pub kind: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `input_dim × gates·hidden`
    pub w_ih: ParamId,
    /// `hidden × gates·hidden`
    pub w_hh: ParamId,
    /// `1 × gates·hidden`
    pub bias: ParamId,
}

impl CellParams {
    /// Registers `{prefix}.w_ih`, `{prefix}.w_hh` and `{prefix}.b`.
    ///
    /// Weights are uniform in ±1/√fan_in, biases zero except the LSTM forget
    /// block, which starts at `forget_bias`.
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        kind: CellKind,
        input_dim: usize,
        hidden_dim: usize,
        forget_bias: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::Invalid(format!(
                "cell {prefix}: dimensions must be positive (input {input_dim}, hidden {hidden_dim})"
            )));
        }
        let width = kind.gates() * hidden_dim;
        let w_ih = store.add(format!("{prefix}.w_ih"), uniform_fan_in(input_dim, width, rng))?;
        let w_hh = store.add(format!("{prefix}.w_hh"), uniform_fan_in(hidden_dim, width, rng))?;
        let mut b = Matrix::zeros(1, width);
        if kind == CellKind::Lstm {
            for c in hidden_dim..2 * hidden_dim {
                b.set(0, c, forget_bias);
            }
        }
        let bias = store.add(format!("{prefix}.b"), b)?;
        Ok(CellParams {
            kind,
            input_dim,
            hidden_dim,
            w_ih,
            w_hh,
            bias,
        })
    }

    pub fn check(&self, store: &ParamStore) -> Result<()> {
        let width = self.kind.gates() * self.hidden_dim;
        let expect = [
            (self.w_ih, [self.input_dim, width]),
            (self.w_hh, [self.hidden_dim, width]),
            (self.bias, [1, width]),
        ];
        for (id, shape) in expect {
            let got = store.value(id).shape();
            if got != shape {
                return Err(Error::shape("cell parameters", &got, &shape));
            }
        }
        Ok(())
    }
}

/// Hidden state and, for an LSTM, the cell state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecurrentState {
    pub h: Var,
    pub c: Option<Var>,
}

impl RecurrentState {
    pub fn zeros(g: &mut Graph, batch: usize, hidden: usize, kind: CellKind) -> Self {
        let h = g.constant(Matrix::zeros(batch, hidden));
        let c = match kind {
            CellKind::Lstm => Some(g.constant(Matrix::zeros(batch, hidden))),
            CellKind::Gru => None,
        };
        RecurrentState { h, c }
    }
}

fn check_step(g: &Graph, x: Var, state: &RecurrentState, p: &CellParams) -> Result<()> {
    let xs = g.shape(x);
    let hs = g.shape(state.h);
    if xs[1] != p.input_dim {
        return Err(Error::shape("cell input", &xs, &[xs[0], p.input_dim]));
    }
    if hs != [xs[0], p.hidden_dim] {
        return Err(Error::shape("cell hidden state", &hs, &[xs[0], p.hidden_dim]));
    }
    match (p.kind, state.c) {
        (CellKind::Lstm, Some(c)) if g.shape(c) == hs => Ok(()),
        (CellKind::Lstm, Some(c)) => Err(Error::shape("lstm cell state", &g.shape(c), &hs)),
        (CellKind::Lstm, None) => Err(Error::Invalid("lstm step without a cell state".into())),
        (CellKind::Gru, None) => Ok(()),
        (CellKind::Gru, Some(_)) => Err(Error::Invalid("gru step given a cell state".into())),
    }
}

pub fn lstm_step(
    g: &mut Graph,
    store: &ParamStore,
    x: Var,
    state: &RecurrentState,
    p: &CellParams,
) -> Result<RecurrentState> {
    check_step(g, x, state, p)?;
    let hd = p.hidden_dim;
    let w_ih = g.param(store, p.w_ih);
    let w_hh = g.param(store, p.w_hh);
    let b = g.param(store, p.bias);
    let xi = g.matmul(x, w_ih)?;
    let hh = g.matmul(state.h, w_hh)?;
    let pre = g.add(xi, hh)?;
    let pre = g.add(pre, b)?;
    let gate = |g: &mut Graph, k: usize| g.slice(pre, Axis::Cols, k * hd, hd);
    let i = gate(g, 0)?;
    let i = g.sigmoid(i);
    let f = gate(g, 1)?;
    let f = g.sigmoid(f);
    let cand = gate(g, 2)?;
    let cand = g.tanh(cand);
    let o = gate(g, 3)?;
    let o = g.sigmoid(o);
    let c_prev = state.c.expect("checked");
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok(RecurrentState { h, c: Some(c) })
}

pub fn gru_step(
    g: &mut Graph,
    store: &ParamStore,
    x: Var,
    state: &RecurrentState,
    p: &CellParams,
) -> Result<RecurrentState> {
    check_step(g, x, state, p)?;
    let hd = p.hidden_dim;
    let w_ih = g.param(store, p.w_ih);
    let w_hh = g.param(store, p.w_hh);
    let b = g.param(store, p.bias);
    let xi = g.matmul(x, w_ih)?;
    let xi = g.add(xi, b)?;
    let u_rz = g.slice(w_hh, Axis::Cols, 0, 2 * hd)?;
    let u_n = g.slice(w_hh, Axis::Cols, 2 * hd, hd)?;
    let h_rz = g.matmul(state.h, u_rz)?;
    let x_rz = g.slice(xi, Axis::Cols, 0, 2 * hd)?;
    let rz = g.add(x_rz, h_rz)?;
    let rz = g.sigmoid(rz);
    let r = g.slice(rz, Axis::Cols, 0, hd)?;
    let z = g.slice(rz, Axis::Cols, hd, hd)?;
    let rh = g.mul(r, state.h)?;
    let h_n = g.matmul(rh, u_n)?;
    let x_n = g.slice(xi, Axis::Cols, 2 * hd, hd)?;
    let n = g.add(x_n, h_n)?;
    let n = g.tanh(n);
    let carry = g.one_minus(z);
    let kept = g.mul(carry, state.h)?;
    let fresh = g.mul(z, n)?;
    let h = g.add(kept, fresh)?;
    Ok(RecurrentState { h, c: None })
}

pub fn cell_step(
    g: &mut Graph,
    store: &ParamStore,
    x: Var,
    state: &RecurrentState,
    p: &CellParams,
) -> Result<RecurrentState> {
    match p.kind {
        CellKind::Lstm => lstm_step(g, store, x, state, p),
        CellKind::Gru => gru_step(g, store, x, state, p),
    }
}

/// Recurrent layers applied in sequence at every time step.
#[derive(Clone, Debug)]
pub struct StackedCell {
    pub layers: Vec<CellParams>,
}

impl StackedCell {
    /// Layers are registered as `{prefix}.l0`, `{prefix}.l1`, ...
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        kind: CellKind,
        input_dim: usize,
        hidden_dim: usize,
        depth: usize,
        forget_bias: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Invalid("stacked cell needs at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(depth);
        for l in 0..depth {
            let in_dim = if l == 0 { input_dim } else { hidden_dim };
            layers.push(CellParams::init(
                store,
                &format!("{prefix}.l{l}"),
                kind,
                in_dim,
                hidden_dim,
                forget_bias,
                rng,
            )?);
        }
        Ok(StackedCell { layers })
    }

    pub fn from_layers(layers: Vec<CellParams>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].hidden_dim != pair[1].input_dim {
                return Err(Error::shape(
                    "stacked layer chain",
                    &[pair[0].hidden_dim],
                    &[pair[1].input_dim],
                ));
            }
        }
        if layers.is_empty() {
            return Err(Error::Invalid("stacked cell needs at least one layer".into()));
        }
        Ok(StackedCell { layers })
    }

    pub fn kind(&self) -> CellKind {
        self.layers[0].kind
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].hidden_dim
    }

    pub fn zero_states(&self, g: &mut Graph, batch: usize) -> Vec<RecurrentState> {
        self.layers
            .iter()
            .map(|l| RecurrentState::zeros(g, batch, l.hidden_dim, l.kind))
            .collect()
    }

    /// One time step through all layers. Dropout with keep-probability
    /// `keep` is applied to each layer's output before it feeds the next
    /// layer, only while training. The last element of the result is the
    /// top layer.
    pub fn step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        states: &[RecurrentState],
        keep: f64,
        training: bool,
    ) -> Result<Vec<RecurrentState>> {
        if states.len() != self.layers.len() {
            return Err(Error::shape("stacked states", &[states.len()], &[self.layers.len()]));
        }
        let mut out = Vec::with_capacity(self.layers.len());
        let mut input = x;
        for (l, (p, s)) in self.layers.iter().zip(states).enumerate() {
            if l > 0 {
                input = g.dropout(input, keep, training)?;
            }
            let next = cell_step(g, store, input, s, p)?;
            input = next.h;
            out.push(next);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_cell(kind: CellKind, input: usize, hidden: usize) -> (ParamStore, CellParams) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = CellParams::init(&mut store, "c", kind, input, hidden, 0.0, &mut rng).unwrap();
        for q in store.iter_mut() {
            q.value.as_mut_slice().fill(0.0);
        }
        (store, p)
    }

    #[test]
    fn zero_lstm_outputs_zero() {
        let (store, p) = zero_cell(CellKind::Lstm, 3, 4);
        let mut g = Graph::new(0);
        let x = g.constant(Matrix::row(vec![0.3, -1.0, 2.0]));
        let s = RecurrentState {
            h: g.constant(Matrix::row(vec![0.5; 4])),
            c: Some(g.constant(Matrix::row(vec![0.0; 4]))),
        };
        let next = lstm_step(&mut g, &store, x, &s, &p).unwrap();
        assert_eq!(g.value(next.h).as_slice(), &[0.0; 4]);
    }

    #[test]
    fn zero_gru_halves_state() {
        let (store, p) = zero_cell(CellKind::Gru, 2, 3);
        let mut g = Graph::new(0);
        let x = g.constant(Matrix::row(vec![1.0, -2.0]));
        let s = RecurrentState {
            h: g.constant(Matrix::row(vec![0.4, -0.2, 1.0])),
            c: None,
        };
        let next = gru_step(&mut g, &store, x, &s, &p).unwrap();
        assert_eq!(g.value(next.h).as_slice(), &[0.2, -0.1, 0.5]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (store, p) = zero_cell(CellKind::Lstm, 3, 4);
        let mut g = Graph::new(0);
        let x = g.constant(Matrix::row(vec![0.0; 2]));
        let s = RecurrentState::zeros(&mut g, 1, 4, CellKind::Lstm);
        assert!(lstm_step(&mut g, &store, x, &s, &p).is_err());
        let x = g.constant(Matrix::row(vec![0.0; 3]));
        let gru_state = RecurrentState::zeros(&mut g, 1, 4, CellKind::Gru);
        assert!(lstm_step(&mut g, &store, x, &gru_state, &p).is_err());
    }

    #[test]
    fn forget_bias_initialized() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = CellParams::init(&mut store, "c", CellKind::Lstm, 2, 3, 1.0, &mut rng).unwrap();
        assert_eq!(
            store.value(p.bias).as_slice(),
            &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
        p.check(&store).unwrap();
    }

    #[test]
    fn layer_chain_mismatch_is_rejected() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = CellParams::init(&mut store, "a", CellKind::Gru, 2, 3, 0.0, &mut rng).unwrap();
        let b = CellParams::init(&mut store, "b", CellKind::Gru, 4, 3, 0.0, &mut rng).unwrap();
        assert!(StackedCell::from_layers(vec![a, b]).is_err());
    }
}
