//! Oracles shared by the integration tests: finite differences, plain-loop
//! cell and attention steps, random fixtures.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stattn::graph::{Graph, Var};
use stattn::model::{FeatureTensor, ForecastBatch, Forecaster, ModelConfig, Variant};
use stattn::{Matrix, Result};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

/// `|a − n| / max(|a|, |n|, 1e-6)`
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// The small configuration used for gradient checks.
pub fn tiny_config(variant: Variant) -> ModelConfig {
    let mut c = ModelConfig {
        stations: 3,
        features_per_station: 4,
        encoder_steps: 5,
        decoder_steps: 2,
        hidden: 8,
        layers: 2,
        dropout: 0.0,
        spatial_width: 6,
        temporal_width: 6,
        ..ModelConfig::default()
    };
    c.set_variant(variant);
    c
}

pub fn random_batch(cfg: &ModelConfig, batch: usize, seed: u64) -> ForecastBatch {
    let mut r = rng(seed);
    let k = cfg.input_width();
    let data = (0..batch * cfg.encoder_steps * k).map(|_| r.gen_range(-1.0..1.0)).collect();
    ForecastBatch {
        inputs: FeatureTensor::new(batch, cfg.encoder_steps, k, data).unwrap(),
        targets: random_matrix(&mut r, batch, cfg.decoder_steps * cfg.stations, 2.0),
    }
}

/// Largest relative error between the model's analytic parameter gradients
/// and central differences of the loss, plus the number of scalars checked.
pub fn model_gradient_check(model: &mut Forecaster, batch: &ForecastBatch, h: f64) -> (f64, usize, String) {
    model.params.zero_grad();
    model.accumulate_gradients(batch, false, 0).unwrap();
    let analytic: Vec<Matrix> = model.params.iter().map(|(_, p)| p.grad.clone()).collect();
    let ids: Vec<_> = model.params.iter().map(|(id, _)| id).collect();
    let mut worst = (0.0, String::new());
    let mut count = 0;
    for (pi, &id) in ids.iter().enumerate() {
        for j in 0..model.params.value(id).len() {
            let orig = model.params.value(id).as_slice()[j];
            model.params.value_mut(id).as_mut_slice()[j] = orig + h;
            let up = model.evaluate_loss(batch).unwrap();
            model.params.value_mut(id).as_mut_slice()[j] = orig - h;
            let down = model.evaluate_loss(batch).unwrap();
            model.params.value_mut(id).as_mut_slice()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let e = rel_err(analytic[pi].as_slice()[j], numeric);
            if e > worst.0 {
                worst = (e, format!("{}[{j}]", model.params.get(id).name));
            }
            count += 1;
        }
    }
    (worst.0, count, worst.1)
}

/// Gradient check of a graph expression with respect to its inputs. The
/// expression output is reduced to a scalar with fixed random weights.
pub fn op_gradient_check(
    inputs: &[Matrix],
    seed: u64,
    f: impl Fn(&mut Graph, &[Var]) -> Result<Var>,
) -> f64 {
    let eval = |vals: &[Matrix], weights: Option<&Matrix>| -> (f64, Vec<Matrix>, Matrix) {
        let mut g = Graph::new(0);
        let vars: Vec<Var> = vals.iter().map(|m| g.variable(m.clone())).collect();
        let out = f(&mut g, &vars).unwrap();
        let [r, c] = g.shape(out);
        let w = match weights {
            Some(w) => w.clone(),
            None => random_matrix(&mut rng(seed ^ 0xABCD), r, c, 1.0),
        };
        let wv = g.constant(w.clone());
        let prod = g.mul(out, wv).unwrap();
        let loss = g.sum(prod);
        let value = g.value(loss).item().unwrap();
        g.backward(loss).unwrap();
        (value, vars.iter().map(|&v| g.grad(v)).collect(), w)
    };
    let (_, grads, w) = eval(inputs, None);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut vals = inputs.to_vec();
    for i in 0..vals.len() {
        for j in 0..vals[i].len() {
            let orig = vals[i].as_slice()[j];
            vals[i].as_mut_slice()[j] = orig + h;
            let up = eval(&vals, Some(&w)).0;
            vals[i].as_mut_slice()[j] = orig - h;
            let down = eval(&vals, Some(&w)).0;
            vals[i].as_mut_slice()[j] = orig;
            worst = worst.max(rel_err(grads[i].as_slice()[j], (up - down) / (2.0 * h)));
        }
    }
    worst
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Plain-loop LSTM step for one example. Weights use `[i|f|g|o]` blocks.
pub fn ref_lstm(x: &[f64], h: &[f64], c: &[f64], w_ih: &Matrix, w_hh: &Matrix, b: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let hd = h.len();
    let pre = |col: usize| {
        let mut s = b.get(0, col);
        for (k, xv) in x.iter().enumerate() {
            s += xv * w_ih.get(k, col);
        }
        for (k, hv) in h.iter().enumerate() {
            s += hv * w_hh.get(k, col);
        }
        s
    };
    let mut h2 = vec![0.0; hd];
    let mut c2 = vec![0.0; hd];
    for j in 0..hd {
        let i = sigmoid(pre(j));
        let f = sigmoid(pre(hd + j));
        let g = pre(2 * hd + j).tanh();
        let o = sigmoid(pre(3 * hd + j));
        c2[j] = f * c[j] + i * g;
        h2[j] = o * c2[j].tanh();
    }
    (h2, c2)
}

/// Plain-loop GRU step for one example. Weights use `[r|z|n]` blocks and
/// `n = tanh(x·W_n + (r⊙h)·U_n + b_n)`, `h' = (1−z)⊙h + z⊙n`.
pub fn ref_gru(x: &[f64], h: &[f64], w_ih: &Matrix, w_hh: &Matrix, b: &Matrix) -> Vec<f64> {
    let hd = h.len();
    let xpart = |col: usize| b.get(0, col) + x.iter().enumerate().map(|(k, v)| v * w_ih.get(k, col)).sum::<f64>();
    let hpart = |col: usize, hv: &[f64]| hv.iter().enumerate().map(|(k, v)| v * w_hh.get(k, col)).sum::<f64>();
    let r: Vec<f64> = (0..hd).map(|j| sigmoid(xpart(j) + hpart(j, h))).collect();
    let z: Vec<f64> = (0..hd).map(|j| sigmoid(xpart(hd + j) + hpart(hd + j, h))).collect();
    let rh: Vec<f64> = (0..hd).map(|j| r[j] * h[j]).collect();
    (0..hd)
        .map(|j| {
            let n = (xpart(2 * hd + j) + hpart(2 * hd + j, &rh)).tanh();
            (1.0 - z[j]) * h[j] + z[j] * n
        })
        .collect()
}

pub fn softmax_ref(s: &[f64]) -> Vec<f64> {
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// Gradient check of every parameter in `store` for a scalar expression
/// built by `f`. Returns the worst relative error and where it occurred.
pub fn param_gradient_check(
    store: &mut stattn::params::ParamStore,
    h: f64,
    f: impl Fn(&mut Graph, &stattn::params::ParamStore) -> Result<Var>,
) -> (f64, String) {
    let value = |s: &stattn::params::ParamStore| {
        let mut g = Graph::new(0);
        let out = f(&mut g, s).unwrap();
        g.value(out).item().unwrap()
    };
    store.zero_grad();
    let mut g = Graph::new(0);
    let out = f(&mut g, store).unwrap();
    g.backward(out).unwrap();
    g.accumulate_param_grads(store);
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    let mut worst = (0.0, String::new());
    for id in ids {
        let analytic = store.grad(id).clone();
        for j in 0..analytic.len() {
            let orig = store.value(id).as_slice()[j];
            store.value_mut(id).as_mut_slice()[j] = orig + h;
            let up = value(store);
            store.value_mut(id).as_mut_slice()[j] = orig - h;
            let down = value(store);
            store.value_mut(id).as_mut_slice()[j] = orig;
            let e = rel_err(analytic.as_slice()[j], (up - down) / (2.0 * h));
            if e > worst.0 {
                worst = (e, format!("{}[{j}]", store.get(id).name));
            }
        }
    }
    worst
}

/// `sum(out ⊙ w)` for fixed random `w`, as a graph scalar.
pub fn weighted_sum(g: &mut Graph, out: Var, seed: u64) -> Result<Var> {
    let [r, c] = g.shape(out);
    let w = g.constant(random_matrix(&mut rng(seed ^ 0x5EED), r, c, 1.0));
    let p = g.mul(out, w)?;
    Ok(g.sum(p))
}

fn pv(model: &Forecaster, name: &str) -> Matrix {
    model.params.value(model.params.id(name).unwrap_or_else(|| panic!("no parameter {name}"))).clone()
}

/// Per-layer states of one example: (h, c).
type LoopState = Vec<(Vec<f64>, Vec<f64>)>;

fn loop_stack(model: &Forecaster, prefix: &str, x: &[f64], states: &mut LoopState) {
    let gru = model.config.cell == stattn::rnn::CellKind::Gru;
    let mut input = x.to_vec();
    for (l, (h, c)) in states.iter_mut().enumerate() {
        let w_ih = pv(model, &format!("{prefix}.l{l}.w_ih"));
        let w_hh = pv(model, &format!("{prefix}.l{l}.w_hh"));
        let b = pv(model, &format!("{prefix}.l{l}.b"));
        if gru {
            *h = ref_gru(&input, h, &w_ih, &w_hh, &b);
        } else {
            let (h2, c2) = ref_lstm(&input, h, c, &w_ih, &w_hh, &b);
            *h = h2;
            *c = c2;
        }
        input = h.clone();
    }
}

/// The whole forecaster written as scalar loops, one example at a time.
/// Returns predictions `B × τ·N` plus per-example spatial (`T × K`) and
/// temporal (`τ × T`) weights when attention is on.
pub fn reference_forward(model: &Forecaster, inputs: &FeatureTensor) -> (Matrix, Vec<Matrix>, Vec<Matrix>) {
    let cfg = &model.config;
    let (hd, k, t_steps, n) = (cfg.hidden, cfg.input_width(), cfg.encoder_steps, cfg.stations);
    let gru = cfg.cell == stattn::rnn::CellKind::Gru;
    let mut preds = Matrix::zeros(inputs.batch(), cfg.decoder_steps * n);
    let (mut spatial_all, mut temporal_all) = (Vec::new(), Vec::new());
    for b in 0..inputs.batch() {
        let mut states: LoopState = vec![(vec![0.0; hd], vec![0.0; hd]); cfg.layers];
        let mut enc_h = Vec::new();
        let mut spatial = Matrix::zeros(t_steps, k);
        for t in 0..t_steps {
            let mut x: Vec<f64> = (0..k).map(|f| inputs.get(b, t, f)).collect();
            if cfg.attention {
                let (v, ws, u, bias) = (pv(model, "enc.attn.v"), pv(model, "enc.attn.w_state"), pv(model, "enc.attn.u_time"), pv(model, "enc.attn.b"));
                let (h, c) = states.last().unwrap();
                let s: Vec<f64> = if gru { h.clone() } else { h.iter().chain(c).copied().collect() };
                let scores: Vec<f64> = (0..k)
                    .map(|f| {
                        (0..cfg.spatial_width)
                            .map(|j| {
                                let mut a = bias.get(0, j);
                                for (i, si) in s.iter().enumerate() {
                                    a += si * ws.get(i, j);
                                }
                                for tt in 0..t_steps {
                                    a += inputs.get(b, tt, f) * u.get(tt, j);
                                }
                                v.get(j, 0) * a.tanh()
                            })
                            .sum()
                    })
                    .collect();
                let alpha = softmax_ref(&scores);
                for f in 0..k {
                    x[f] *= alpha[f];
                    spatial.set(t, f, alpha[f]);
                }
            }
            loop_stack(model, "enc", &x, &mut states);
            enc_h.push(states.last().unwrap().0.clone());
        }
        let mut input: Vec<f64> = pv(model, "dec.start").into_vec();
        let mut temporal = Matrix::zeros(cfg.decoder_steps, t_steps);
        let (hw, hb) = (pv(model, "head.w"), pv(model, "head.b"));
        for step in 0..cfg.decoder_steps {
            loop_stack(model, "dec", &input, &mut states);
            let h = states.last().unwrap().0.clone();
            let head_in: Vec<f64> = if cfg.attention {
                let (v, w) = (pv(model, "dec.attn.v"), pv(model, "dec.attn.w"));
                let scores: Vec<f64> = enc_h
                    .iter()
                    .map(|ht| {
                        let joint: Vec<f64> = ht.iter().chain(&h).copied().collect();
                        (0..cfg.temporal_width)
                            .map(|j| v.get(j, 0) * joint.iter().enumerate().map(|(i, z)| z * w.get(i, j)).sum::<f64>().tanh())
                            .sum()
                    })
                    .collect();
                let gamma = softmax_ref(&scores);
                for (tt, gv) in gamma.iter().enumerate() {
                    temporal.set(step, tt, *gv);
                }
                let mut d = vec![0.0; hd];
                for (gv, ht) in gamma.iter().zip(&enc_h) {
                    for (dj, hj) in d.iter_mut().zip(ht) {
                        *dj += gv * hj;
                    }
                }
                if cfg.context == stattn::attention::ContextMode::Concatenated {
                    // Σγ_t [h_t; h'] with the decoder half summed explicitly
                    let mut tail = vec![0.0; hd];
                    for gv in &gamma {
                        for (tj, hj) in tail.iter_mut().zip(&h) {
                            *tj += gv * hj;
                        }
                    }
                    d.extend(tail);
                }
                d.into_iter().chain(h.iter().copied()).collect()
            } else {
                h.clone()
            };
            let y: Vec<f64> = (0..n)
                .map(|j| hb.get(0, j) + head_in.iter().enumerate().map(|(i, z)| z * hw.get(i, j)).sum::<f64>())
                .collect();
            for (j, yj) in y.iter().enumerate() {
                preds.set(b, step * n + j, *yj);
            }
            input = y;
        }
        spatial_all.push(spatial);
        temporal_all.push(temporal);
    }
    (preds, spatial_all, temporal_all)
}
