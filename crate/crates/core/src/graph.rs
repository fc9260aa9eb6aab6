//! Reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Graph`] is a tape: every operation evaluates eagerly, appends a node
//! and returns a [`Var`] handle. Nodes only ever reference earlier nodes, so
//! creation order is a topological order and [`Graph::backward`] is a single
//! reverse sweep that visits each node once.
//!
//! ```
//! use stattn::graph::Graph;
//! use stattn::tensor::Matrix;
//!
//! let mut g = Graph::new(0);
//! let x = g.variable(Matrix::row(vec![1.0, 2.0]));
//! let y = g.tanh(x);
//! let loss = g.mean_square(y).unwrap();
//! g.backward(loss).unwrap();
//! let dx = g.grad(x);
//! let expect = 2.0 * 1f64.tanh() * (1.0 - 1f64.tanh().powi(2)) / 2.0;
//! assert!((dx.get(0, 0) - expect).abs() < 1e-15);
//! ```
//!
//! Binary element-wise operations broadcast: each operand dimension must
//! either match the other or be 1.
//!
//! Gradients accumulate. Calling [`Graph::backward`] twice on the same loss
//! leaves every gradient at twice its single-pass value; call
//! [`Graph::zero_grad`] in between to start over.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Matrix;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Axis for reductions, softmax and concatenation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Along rows (down a column).
    Rows,
    /// Along columns (across a row).
    Cols,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Affine { a: usize, scale: f64 },
    Tanh(usize),
    Sigmoid(usize),
    Softmax { a: usize, axis: Axis },
    Concat { parts: Vec<usize>, axis: Axis },
    Slice { a: usize, axis: Axis, start: usize },
    Reshape(usize),
    RepeatRows { a: usize, times: usize },
    Transpose(usize),
    MeanSquare(usize),
    Sum(usize),
    Sqrt(usize),
    Dropout { a: usize, mask: Matrix },
}

struct Node {
    value: Matrix,
    grad: Option<Matrix>,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

pub struct Graph {
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
    rng: ChaCha8Rng,
}

fn broadcast_shape(op: &'static str, a: &Matrix, b: &Matrix) -> Result<[usize; 2]> {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    match (dim(a.rows(), b.rows()), dim(a.cols(), b.cols())) {
        (Some(r), Some(c)) => Ok([r, c]),
        _ => Err(Error::shape(op, &a.shape(), &b.shape())),
    }
}

fn broadcast_zip(a: &Matrix, b: &Matrix, shape: [usize; 2], f: impl Fn(f64, f64) -> f64) -> Matrix {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let pick = |m: &Matrix, r: usize, c: usize| {
        m.get(
            if m.rows() == 1 { 0 } else { r },
            if m.cols() == 1 { 0 } else { c },
        )
    };
    Matrix::from_fn(shape[0], shape[1], |r, c| f(pick(a, r, c), pick(b, r, c)))
}

/// Sum a broadcast gradient back down to `shape`.
fn reduce_to(grad: Matrix, shape: [usize; 2]) -> Matrix {
    if grad.shape() == shape {
        return grad;
    }
    let mut out = Matrix::zeros(shape[0], shape[1]);
    for r in 0..grad.rows() {
        let rr = if shape[0] == 1 { 0 } else { r };
        for c in 0..grad.cols() {
            let cc = if shape[1] == 1 { 0 } else { c };
            let v = out.get(rr, cc) + grad.get(r, c);
            out.set(rr, cc, v);
        }
    }
    out
}

fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_slice_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Numerically stable softmax of a plain slice.
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Invalid("softmax over an empty axis".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("softmax over non-finite scores".into()));
    }
    Ok(softmax_rows(&Matrix::row(scores.to_vec())).into_vec())
}

impl Graph {
    /// New empty tape; `seed` drives dropout masks.
    pub fn new(seed: u64) -> Self {
        Graph {
            nodes: Vec::new(),
            param_nodes: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, inputs: &[usize]) -> bool {
        inputs.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// A leaf that does not take gradients (data).
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf that takes gradients.
    pub fn variable(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf holding a copy of a stored parameter. Repeated calls with the same
    /// id return the same node, so weights shared across time steps collect
    /// their gradient in one place.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if self.param_nodes.len() <= id.index() {
            self.param_nodes.resize(id.index() + 1, None);
        }
        if let Some(v) = self.param_nodes[id.index()] {
            return v;
        }
        let v = self.variable(store.value(id).clone());
        self.nodes[v.0].param = Some(id);
        self.param_nodes[id.index()] = Some(v);
        v
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient; zeros when nothing reached the node.
    pub fn grad(&self, v: Var) -> Matrix {
        let node = &self.nodes[v.0];
        node.grad
            .clone()
            .unwrap_or_else(|| Matrix::zeros(node.value.rows(), node.value.cols()))
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(&[a.0, b.0]);
        Ok(self.push(value, Op::MatMul(a.0, b.0), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let shape = broadcast_shape("add", x, y)?;
        let value = broadcast_zip(x, y, shape, |p, q| p + q);
        let rg = self.needs(&[a.0, b.0]);
        Ok(self.push(value, Op::Add(a.0, b.0), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let shape = broadcast_shape("sub", x, y)?;
        let value = broadcast_zip(x, y, shape, |p, q| p - q);
        let rg = self.needs(&[a.0, b.0]);
        Ok(self.push(value, Op::Sub(a.0, b.0), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let shape = broadcast_shape("mul", x, y)?;
        let value = broadcast_zip(x, y, shape, |p, q| p * q);
        let rg = self.needs(&[a.0, b.0]);
        Ok(self.push(value, Op::Mul(a.0, b.0), rg))
    }

    /// `scale · a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(a).map(|v| scale * v + shift);
        let rg = self.needs(&[a.0]);
        self.push(value, Op::Affine { a: a.0, scale }, rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.affine(a, factor, 0.0)
    }

    /// `1 − a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        self.affine(a, -1.0, 1.0)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let rg = self.needs(&[a.0]);
        self.push(value, Op::Tanh(a.0), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| 1.0 / (1.0 + (-v).exp()));
        let rg = self.needs(&[a.0]);
        self.push(value, Op::Sigmoid(a.0), rg)
    }

    /// Softmax along `axis`, with max subtraction.
    pub fn softmax(&mut self, a: Var, axis: Axis) -> Result<Var> {
        let x = self.value(a);
        let len = match axis {
            Axis::Cols => x.cols(),
            Axis::Rows => x.rows(),
        };
        if len == 0 {
            return Err(Error::Invalid(format!(
                "softmax over an empty axis of a {:?} matrix",
                x.shape()
            )));
        }
        let value = match axis {
            Axis::Cols => softmax_rows(x),
            Axis::Rows => softmax_rows(&x.transpose()).transpose(),
        };
        let rg = self.needs(&[a.0]);
        Ok(self.push(value, Op::Softmax { a: a.0, axis }, rg))
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Invalid("concat of zero parts".into()))?;
        let base = self.shape(*first);
        let value = match axis {
            Axis::Cols => {
                let mut cols = 0;
                for p in parts {
                    let s = self.shape(*p);
                    if s[0] != base[0] {
                        return Err(Error::shape("concat", &base, &s));
                    }
                    cols += s[1];
                }
                let mut out = Matrix::zeros(base[0], cols);
                for r in 0..base[0] {
                    let mut off = 0;
                    for p in parts {
                        let src = self.value(*p).row_slice(r);
                        out.row_slice_mut(r)[off..off + src.len()].copy_from_slice(src);
                        off += src.len();
                    }
                }
                out
            }
            Axis::Rows => {
                let mut data = Vec::new();
                let mut rows = 0;
                for p in parts {
                    let m = self.value(*p);
                    if m.cols() != base[1] {
                        return Err(Error::shape("concat", &base, &m.shape()));
                    }
                    rows += m.rows();
                    data.extend_from_slice(m.as_slice());
                }
                Matrix::from_vec(rows, base[1], data)?
            }
        };
        let idx: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let rg = self.needs(&idx);
        Ok(self.push(value, Op::Concat { parts: idx, axis }, rg))
    }

    /// `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, a: Var, axis: Axis, start: usize, len: usize) -> Result<Var> {
        let value = match axis {
            Axis::Cols => self.value(a).slice_cols(start, len)?,
            Axis::Rows => self.value(a).slice_rows(start, len)?,
        };
        let rg = self.needs(&[a.0]);
        Ok(self.push(value, Op::Slice { a: a.0, axis, start }, rg))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = self.value(a).reshape(rows, cols)?;
        let rg = self.needs(&[a.0]);
        Ok(self.push(value, Op::Reshape(a.0), rg))
    }

    /// Each row repeated `times` times consecutively: row `i·times + j` of
    /// the result is row `i` of `a`.
    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Var {
        let x = self.value(a);
        let mut data = Vec::with_capacity(x.len() * times);
        for r in 0..x.rows() {
            for _ in 0..times {
                data.extend_from_slice(x.row_slice(r));
            }
        }
        let value = Matrix::from_vec(x.rows() * times, x.cols(), data).expect("sized above");
        let rg = self.needs(&[a.0]);
        self.push(value, Op::RepeatRows { a: a.0, times }, rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.needs(&[a.0]);
        self.push(value, Op::Transpose(a.0), rg)
    }

    /// Mean of squared entries, as a `1 × 1` value.
    pub fn mean_square(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(Error::Invalid("mean_square of an empty matrix".into()));
        }
        let value = Matrix::scalar(x.sum_of_squares() / x.len() as f64);
        let rg = self.needs(&[a.0]);
        Ok(self.push(value, Op::MeanSquare(a.0), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let rg = self.needs(&[a.0]);
        self.push(value, Op::Sum(a.0), rg)
    }

    /// Element-wise square root. The derivative at exactly 0 is taken as 0.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.as_slice().iter().any(|&v| v < 0.0) {
            return Err(Error::Numeric("sqrt of a negative value".into()));
        }
        let value = x.map(f64::sqrt);
        let rg = self.needs(&[a.0]);
        Ok(self.push(value, Op::Sqrt(a.0), rg))
    }

    /// Inverted dropout: kept entries are divided by `keep` while training;
    /// outside training (or with `keep == 1`) the input handle is returned
    /// unchanged.
    pub fn dropout(&mut self, a: Var, keep: f64, training: bool) -> Result<Var> {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(Error::Invalid(format!("dropout keep-probability {keep} outside (0, 1]")));
        }
        if !training || keep == 1.0 {
            return Ok(a);
        }
        let [rows, cols] = self.shape(a);
        let rng = &mut self.rng;
        let mask = Matrix::from_fn(rows, cols, |_, _| {
            if rng.gen::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        let value = self.value(a).zip_map(&mask, |x, m| x * m);
        let rg = self.needs(&[a.0]);
        Ok(self.push(value, Op::Dropout { a: a.0, mask }, rg))
    }

    /// Propagate d`loss`/d(node) to every node that takes gradients, adding
    /// onto whatever gradient is already there.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if shape != [1, 1] {
            return Err(Error::shape("backward (loss must be scalar)", &shape, &[1, 1]));
        }
        let mut pending: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        pending[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = pending[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            for (input, contrib) in self.local_grads(i, &g)? {
                if !self.nodes[input].requires_grad {
                    continue;
                }
                match &mut pending[input] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &Matrix) -> Result<Vec<(usize, Matrix)>> {
        let node = &self.nodes[i];
        let val = |j: usize| &self.nodes[j].value;
        let y = &node.value;
        Ok(match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => vec![
                (*a, g.matmul_nt(val(*b))?),
                (*b, val(*a).matmul_tn(g)?),
            ],
            Op::Add(a, b) => vec![
                (*a, reduce_to(g.clone(), val(*a).shape())),
                (*b, reduce_to(g.clone(), val(*b).shape())),
            ],
            Op::Sub(a, b) => vec![
                (*a, reduce_to(g.clone(), val(*a).shape())),
                (*b, reduce_to(g.map(|v| -v), val(*b).shape())),
            ],
            Op::Mul(a, b) => {
                let (x, z) = (val(*a), val(*b));
                let ga = broadcast_zip(g, z, g.shape(), |p, q| p * q);
                let gb = broadcast_zip(g, x, g.shape(), |p, q| p * q);
                vec![(*a, reduce_to(ga, x.shape())), (*b, reduce_to(gb, z.shape()))]
            }
            Op::Affine { a, scale } => vec![(*a, g.map(|v| v * scale))],
            Op::Tanh(a) => vec![(*a, g.zip_map(y, |gv, t| gv * (1.0 - t * t)))],
            Op::Sigmoid(a) => vec![(*a, g.zip_map(y, |gv, s| gv * s * (1.0 - s)))],
            Op::Softmax { a, axis } => {
                let grad = match axis {
                    Axis::Cols => softmax_backward_rows(y, g),
                    Axis::Rows => softmax_backward_rows(&y.transpose(), &g.transpose()).transpose(),
                };
                vec![(*a, grad)]
            }
            Op::Concat { parts, axis } => {
                let mut out = Vec::with_capacity(parts.len());
                let mut off = 0;
                for &p in parts {
                    let [r, c] = val(p).shape();
                    let piece = match axis {
                        Axis::Cols => {
                            off += c;
                            g.slice_cols(off - c, c)?
                        }
                        Axis::Rows => {
                            off += r;
                            g.slice_rows(off - r, r)?
                        }
                    };
                    out.push((p, piece));
                }
                out
            }
            Op::Slice { a, axis, start } => {
                let x = val(*a);
                let mut grad = Matrix::zeros(x.rows(), x.cols());
                match axis {
                    Axis::Cols => {
                        for r in 0..g.rows() {
                            grad.row_slice_mut(r)[*start..*start + g.cols()]
                                .copy_from_slice(g.row_slice(r));
                        }
                    }
                    Axis::Rows => {
                        let w = x.cols();
                        grad.as_mut_slice()[start * w..(start + g.rows()) * w]
                            .copy_from_slice(g.as_slice());
                    }
                }
                vec![(*a, grad)]
            }
            Op::Reshape(a) => {
                let [r, c] = val(*a).shape();
                vec![(*a, g.reshape(r, c)?)]
            }
            Op::RepeatRows { a, times } => {
                let x = val(*a);
                let mut grad = Matrix::zeros(x.rows(), x.cols());
                for r in 0..g.rows() {
                    let dst = grad.row_slice_mut(r / times);
                    for (d, s) in dst.iter_mut().zip(g.row_slice(r)) {
                        *d += s;
                    }
                }
                vec![(*a, grad)]
            }
            Op::Transpose(a) => vec![(*a, g.transpose())],
            Op::MeanSquare(a) => {
                let x = val(*a);
                let k = 2.0 * g.item()? / x.len() as f64;
                vec![(*a, x.map(|v| k * v))]
            }
            Op::Sum(a) => {
                let x = val(*a);
                vec![(*a, Matrix::filled(x.rows(), x.cols(), g.item()?))]
            }
            Op::Sqrt(a) => vec![(
                *a,
                g.zip_map(y, |gv, s| if s == 0.0 { 0.0 } else { gv / (2.0 * s) }),
            )],
            Op::Dropout { a, mask } => vec![(*a, g.zip_map(mask, |gv, m| gv * m))],
        })
    }

    /// Add every parameter leaf's gradient onto the store's gradients.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for v in self.param_nodes.iter().flatten() {
            let node = &self.nodes[v.0];
            if let (Some(id), Some(g)) = (node.param, &node.grad) {
                store.get_mut(id).grad.add_assign(g);
            }
        }
    }
}

fn softmax_backward_rows(y: &Matrix, g: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let (yr, gr) = (y.row_slice(r), g.row_slice(r));
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for (o, (yv, gv)) in out.row_slice_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
            *o = yv * (gv - dot);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_equal_scores_is_uniform() {
        let w = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for v in w {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rejects_empty_axis() {
        assert!(softmax(&[]).is_err());
        let mut g = Graph::new(0);
        let x = g.constant(Matrix::zeros(2, 0));
        assert!(g.softmax(x, Axis::Cols).is_err());
    }

    #[test]
    fn tanh_and_sigmoid_identity_points() {
        let mut g = Graph::new(0);
        let x = g.constant(Matrix::scalar(0.0));
        let t = g.tanh(x);
        let s = g.sigmoid(x);
        assert_eq!(g.value(t).get(0, 0), 0.0);
        assert_eq!(g.value(s).get(0, 0), 0.5);
    }

    #[test]
    fn identity_loss_has_unit_gradient() {
        let mut g = Graph::new(0);
        let x = g.variable(Matrix::scalar(4.2));
        g.backward(x).unwrap();
        assert_eq!(g.grad(x).get(0, 0), 1.0);
    }

    #[test]
    fn backward_accumulates_across_calls() {
        let mut g = Graph::new(0);
        let x = g.variable(Matrix::row(vec![1.0, -2.0]));
        let loss = g.mean_square(x).unwrap();
        g.backward(loss).unwrap();
        let once = g.grad(x);
        g.backward(loss).unwrap();
        let twice = g.grad(x);
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            assert_eq!(2.0 * a, *b);
        }
        g.zero_grad();
        assert_eq!(g.grad(x).sum(), 0.0);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new(0);
        let x = g.variable(Matrix::row(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::Shape { .. })));
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let mut g = Graph::new(0);
        let a = g.constant(Matrix::zeros(2, 3));
        let b = g.constant(Matrix::zeros(2, 3));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        let c = g.constant(Matrix::zeros(3, 2));
        assert!(g.add(a, c).is_err());
    }

    #[test]
    fn broadcast_add_reduces_gradient() {
        let mut g = Graph::new(0);
        let x = g.variable(Matrix::zeros(3, 2));
        let b = g.variable(Matrix::row(vec![1.0, 2.0]));
        let y = g.add(x, b).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(b).as_slice(), &[3.0, 3.0]);
        assert_eq!(g.grad(x).as_slice(), &[1.0; 6]);
    }

    #[test]
    fn disconnected_parameter_has_zero_grad() {
        let mut store = ParamStore::new();
        let a = store.add("a", Matrix::row(vec![1.0, 2.0])).unwrap();
        let b = store.add("b", Matrix::row(vec![3.0])).unwrap();
        let mut g = Graph::new(0);
        let va = g.param(&store, a);
        let _vb = g.param(&store, b);
        let loss = g.mean_square(va).unwrap();
        g.backward(loss).unwrap();
        g.accumulate_param_grads(&mut store);
        assert_eq!(store.grad(b).as_slice(), &[0.0]);
        assert_eq!(store.grad(a).as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn dropout_is_identity_at_inference() {
        let mut g = Graph::new(7);
        let x = g.variable(Matrix::row(vec![1.0, 2.0, 3.0]));
        let y = g.dropout(x, 0.7, false).unwrap();
        assert_eq!(x, y);
        let z = g.dropout(x, 1.0, true).unwrap();
        assert_eq!(x, z);
        assert!(g.dropout(x, 0.0, true).is_err());
    }
}
