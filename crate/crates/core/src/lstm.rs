//! Single-layer LSTM forecaster with a linear head, trained by BPTT and Adam.
//!
//! The input window is fed one scalar per step from zero states; the head maps
//! the final hidden state to the `nz` outputs.
//!
//! Parameters live in one flat vector. For each gate in the order input,
//! forget, output, candidate: a `hidden × (1 + hidden)` row-major matrix whose
//! first column multiplies the input, then `hidden` biases. After the gates
//! come the `nz × hidden` head matrix and `nz` head biases.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predict::Predictor;
use crate::simulate::stream_rng;

const GATES: usize = 4;
const FORGET: usize = 1;
const CANDIDATE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmNet {
    nh: usize,
    nz: usize,
    hidden: usize,
    params: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Trace {
    /// Per step: gate activations `[i, f, o, g]` each of length `hidden`.
    gates: Vec<Vec<f64>>,
    /// Cell states, `c[0]` is the zero initial state.
    c: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl LstmNet {
    /// Parameter count; independent of the input window length.
    pub fn param_count(nz: usize, hidden: usize) -> usize {
        GATES * (hidden * (1 + hidden) + hidden) + nz * hidden + nz
    }

    /// All parameters zero.
    pub fn zeros(nh: usize, nz: usize, hidden: usize) -> Result<Self> {
        if nh == 0 || nz == 0 || hidden == 0 {
            return Err(Error::param("shape", "nh, nz and hidden must be positive"));
        }
        Ok(Self {
            nh,
            nz,
            hidden,
            params: vec![0.0; Self::param_count(nz, hidden)],
        })
    }

    /// Uniform(−0.08, 0.08) weights, zero biases except forget-gate biases of 1.
    pub fn init(nh: usize, nz: usize, hidden: usize, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(nh, nz, hidden)?;
        let mut rng = stream_rng(seed, 0x1517);
        for v in net.params.iter_mut() {
            *v = rng.random_range(-0.08..0.08);
        }
        for g in 0..GATES {
            let off = net.bias_offset(g);
            let fill = if g == FORGET { 1.0 } else { 0.0 };
            net.params[off..off + hidden].fill(fill);
        }
        let hb = net.head_bias_offset();
        net.params[hb..hb + nz].fill(0.0);
        Ok(net)
    }

    pub fn from_params(nh: usize, nz: usize, hidden: usize, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(nh, nz, hidden)?;
        if params.len() != net.params.len() {
            return Err(Error::ShapeMismatch {
                expected: net.params.len(),
                actual: params.len(),
            });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LSTM parameters"));
        }
        net.params = params;
        Ok(net)
    }

    pub fn nh(&self) -> usize {
        self.nh
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn gate_block(&self) -> usize {
        self.hidden * (1 + self.hidden) + self.hidden
    }

    fn weight_offset(&self, gate: usize) -> usize {
        gate * self.gate_block()
    }

    fn bias_offset(&self, gate: usize) -> usize {
        gate * self.gate_block() + self.hidden * (1 + self.hidden)
    }

    fn head_offset(&self) -> usize {
        GATES * self.gate_block()
    }

    fn head_bias_offset(&self) -> usize {
        self.head_offset() + self.nz * self.hidden
    }

    /// Sets the head biases; handy for building fixtures.
    pub fn set_head_bias(&mut self, bias: &[f64]) -> Result<()> {
        if bias.len() != self.nz {
            return Err(Error::ShapeMismatch {
                expected: self.nz,
                actual: bias.len(),
            });
        }
        let off = self.head_bias_offset();
        self.params[off..off + self.nz].copy_from_slice(bias);
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.nh {
            return Err(Error::ShapeMismatch {
                expected: self.nh,
                actual: input.len(),
            });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LSTM input"));
        }
        Ok(())
    }

    fn run(&self, input: &[f64]) -> Trace {
        let hd = self.hidden;
        let p = &self.params;
        let mut gates = Vec::with_capacity(input.len());
        let mut c = vec![vec![0.0; hd]];
        let mut h = vec![vec![0.0; hd]];
        for &x in input {
            let hp = h.last().expect("initial state");
            let cp = c.last().expect("initial state");
            let mut act = vec![0.0; GATES * hd];
            for g in 0..GATES {
                let w = self.weight_offset(g);
                let b = self.bias_offset(g);
                for r in 0..hd {
                    let row = &p[w + r * (1 + hd)..w + (r + 1) * (1 + hd)];
                    let mut z = p[b + r] + row[0] * x;
                    for (wv, hv) in row[1..].iter().zip(hp) {
                        z += wv * hv;
                    }
                    act[g * hd + r] = if g == CANDIDATE { z.tanh() } else { sigmoid(z) };
                }
            }
            let mut cn = vec![0.0; hd];
            let mut hn = vec![0.0; hd];
            for r in 0..hd {
                let (i, f, o, gg) = (act[r], act[hd + r], act[2 * hd + r], act[3 * hd + r]);
                cn[r] = f * cp[r] + i * gg;
                hn[r] = o * cn[r].tanh();
            }
            gates.push(act);
            c.push(cn);
            h.push(hn);
        }
        let last = h.last().expect("initial state");
        let ho = self.head_offset();
        let hb = self.head_bias_offset();
        let y = (0..self.nz)
            .map(|k| {
                p[hb + k]
                    + p[ho + k * hd..ho + (k + 1) * hd]
                        .iter()
                        .zip(last)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        Trace { gates, c, h, y }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.run(input).y)
    }

    /// Loss `½‖forward(input) − target‖²` and its exact gradient.
    pub fn backward(&self, input: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_input(input)?;
        if target.len() != self.nz {
            return Err(Error::ShapeMismatch {
                expected: self.nz,
                actual: target.len(),
            });
        }
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate(input, target, &mut grad);
        Ok((loss, grad))
    }

    fn accumulate(&self, input: &[f64], target: &[f64], grad: &mut [f64]) -> f64 {
        let hd = self.hidden;
        let p = &self.params;
        let tr = self.run(input);
        let dy: Vec<f64> = tr.y.iter().zip(target).map(|(y, t)| y - t).collect();
        let loss = 0.5 * dy.iter().map(|d| d * d).sum::<f64>();

        let ho = self.head_offset();
        let hb = self.head_bias_offset();
        let steps = input.len();
        let h_last = &tr.h[steps];
        let mut dh = vec![0.0; hd];
        for k in 0..self.nz {
            grad[hb + k] += dy[k];
            for r in 0..hd {
                grad[ho + k * hd + r] += dy[k] * h_last[r];
                dh[r] += p[ho + k * hd + r] * dy[k];
            }
        }
        let mut dc = vec![0.0; hd];
        let mut dz = vec![0.0; GATES * hd];
        for t in (0..steps).rev() {
            let act = &tr.gates[t];
            let c_prev = &tr.c[t];
            let c_now = &tr.c[t + 1];
            let h_prev = &tr.h[t];
            for r in 0..hd {
                let (i, f, o, g) = (act[r], act[hd + r], act[2 * hd + r], act[3 * hd + r]);
                let tc = c_now[r].tanh();
                let d_o = dh[r] * tc;
                dc[r] += dh[r] * o * (1.0 - tc * tc);
                let d_i = dc[r] * g;
                let d_g = dc[r] * i;
                let d_f = dc[r] * c_prev[r];
                dz[r] = d_i * i * (1.0 - i);
                dz[hd + r] = d_f * f * (1.0 - f);
                dz[2 * hd + r] = d_o * o * (1.0 - o);
                dz[3 * hd + r] = d_g * (1.0 - g * g);
                dc[r] *= f;
            }
            dh.fill(0.0);
            let x = input[t];
            for g in 0..GATES {
                let w = self.weight_offset(g);
                let b = self.bias_offset(g);
                for r in 0..hd {
                    let d = dz[g * hd + r];
                    if d == 0.0 {
                        continue;
                    }
                    grad[b + r] += d;
                    let base = w + r * (1 + hd);
                    grad[base] += d * x;
                    for s in 0..hd {
                        grad[base + 1 + s] += d * h_prev[s];
                        dh[s] += p[base + 1 + s] * d;
                    }
                }
            }
        }
        loss
    }

    /// Flat text: header, shape line, then one line per gate row, bias block or head row.
    ///
    /// ```text
    /// trendcpd-lstm 1
    /// shape <nh> <nz> <hidden>
    /// <values...>
    /// ```
    pub fn to_text(&self) -> String {
        let mut s = format!("trendcpd-lstm 1\nshape {} {} {}\n", self.nh, self.nz, self.hidden);
        let hd = self.hidden;
        let mut rows: Vec<&[f64]> = Vec::new();
        for g in 0..GATES {
            let w = self.weight_offset(g);
            for r in 0..hd {
                rows.push(&self.params[w + r * (1 + hd)..w + (r + 1) * (1 + hd)]);
            }
            let b = self.bias_offset(g);
            rows.push(&self.params[b..b + hd]);
        }
        let ho = self.head_offset();
        for k in 0..self.nz {
            rows.push(&self.params[ho + k * hd..ho + (k + 1) * hd]);
        }
        let hb = self.head_bias_offset();
        rows.push(&self.params[hb..hb + self.nz]);
        for row in rows {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "trendcpd-lstm 1" => {}
            _ => return Err(Error::parse(1, "expected header `trendcpd-lstm 1`")),
        }
        let (shape_line, shape) = lines.next().ok_or_else(|| Error::parse(2, "missing shape line"))?;
        let dims: Vec<usize> = shape
            .split_whitespace()
            .skip(1)
            .map(|s| s.parse().map_err(|e| Error::parse(shape_line + 1, format!("shape: {e}"))))
            .collect::<Result<_>>()?;
        let [nh, nz, hidden] = dims[..] else {
            return Err(Error::parse(shape_line + 1, "shape takes nh nz hidden"));
        };
        let mut params = Vec::new();
        for (i, line) in lines {
            for tok in line.split_whitespace() {
                params.push(tok.parse::<f64>().map_err(|e| Error::parse(i + 1, e.to_string()))?);
            }
        }
        Self::from_params(nh, nz, hidden, params)
    }
}

impl Predictor for LstmNet {
    fn input_len(&self) -> usize {
        self.nh
    }

    fn horizon(&self) -> usize {
        self.nz
    }

    fn forecast(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward(input)
    }
}

/// `|a − b| / max(|a|, |b|, 1e-7)`; the floor keeps vanishing gradients from
/// turning finite-difference roundoff into a large ratio.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

/// Scales `grad` down to norm `max_norm` if it is longer. Returns the original norm.
pub fn clip_gradient(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gradient_clip_norm: f64,
    pub seed: u64,
    pub validation_fraction: f64,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
}

fn default_hidden() -> usize {
    32
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            gradient_clip_norm: 5.0,
            seed: 0,
            validation_fraction: 0.2,
            hidden: default_hidden(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::param("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be at least 1"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::param("validation_fraction", "must lie in (0, 1)"));
        }
        if !(self.learning_rate > 0.0 && self.gradient_clip_norm > 0.0) {
            return Err(Error::param("learning_rate", "rate and clip norm must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean squared error per output after each epoch.
    pub train_loss: Vec<f64>,
    /// `None` when the held-out split is empty.
    pub validation_loss: Vec<Option<f64>>,
    /// Validation loss of the initial net.
    pub initial_validation_loss: Option<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

fn mse(net: &LstmNet, pairs: &[(Vec<f64>, Vec<f64>)], idx: &[usize]) -> Option<f64> {
    if idx.is_empty() {
        return None;
    }
    let total: f64 = idx
        .iter()
        .map(|&i| {
            let (x, y) = &pairs[i];
            let out = net.run(x).y;
            out.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / net.nz as f64
        })
        .sum();
    Some(total / idx.len() as f64)
}

/// Minibatch Adam on the averaged batch gradient. A seeded shuffle splits off
/// the validation part once; training order is reshuffled every epoch.
pub fn train(mut net: LstmNet, pairs: &[(Vec<f64>, Vec<f64>)], cfg: &TrainConfig) -> Result<(LstmNet, TrainReport)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Untrainable("no training pairs".into()));
    }
    for (x, y) in pairs {
        if x.len() != net.nh || y.len() != net.nz {
            return Err(Error::ShapeMismatch {
                expected: net.nh,
                actual: x.len(),
            });
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training pairs"));
        }
    }
    let mut rng = stream_rng(cfg.seed, 0x7a1);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if pairs.len() > 1 {
        ((pairs.len() as f64 * cfg.validation_fraction).round() as usize).min(pairs.len() - 1)
    } else {
        0
    };
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let mut adam = Adam::new(net.params.len());
    let mut grad = vec![0.0; net.params.len()];
    let mut report = TrainReport {
        train_loss: Vec::with_capacity(cfg.epochs),
        validation_loss: Vec::with_capacity(cfg.epochs),
        initial_validation_loss: mse(&net, pairs, &val_idx),
    };
    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        for batch in train_idx.chunks(cfg.batch_size) {
            grad.fill(0.0);
            for &i in batch {
                let (x, y) = &pairs[i];
                net.accumulate(x, y, &mut grad);
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            clip_gradient(&mut grad, cfg.gradient_clip_norm);
            adam.step(&mut net.params, &grad, cfg.learning_rate);
        }
        let loss = mse(&net, pairs, &train_idx).unwrap_or(0.0);
        if !loss.is_finite() || net.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch, loss });
        }
        report.train_loss.push(loss);
        report.validation_loss.push(mse(&net, pairs, &val_idx));
    }
    Ok((net, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_output_head_bias() {
        let mut net = LstmNet::zeros(5, 3, 4).unwrap();
        net.set_head_bias(&[1.5, -2.0, 0.25]).unwrap();
        assert_eq!(net.forward(&[9.0, -3.0, 1.0, 0.0, 7.0]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = LstmNet::init(6, 2, 4, 42).unwrap();
        let b = LstmNet::init(6, 2, 4, 42).unwrap();
        let x = [0.1, -0.4, 0.3, 0.9, -1.0, 0.0];
        assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
        assert_ne!(a.params(), LstmNet::init(6, 2, 4, 43).unwrap().params());
    }

    #[test]
    fn zero_target_and_zero_output_give_zero_gradient() {
        let net = LstmNet::zeros(4, 2, 3).unwrap();
        let (loss, g) = net.backward(&[1.0, 2.0, 3.0, 4.0], &[0.0, 0.0]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let net = LstmNet::init(6, 2, 4, 3).unwrap();
        let mut net = net;
        // larger weights exercise the nonlinearities
        for (i, v) in net.params_mut().iter_mut().enumerate() {
            *v *= 2.0 + (i % 3) as f64;
        }
        let x = [0.5, -1.0, 0.25, 0.8, -0.3, 1.2];
        let y = [0.3, -0.7];
        let (_, g) = net.backward(&x, &y).unwrap();
        let h = 1e-5;
        for (i, &gi) in g.iter().enumerate() {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            let fp = plus.backward(&x, &y).unwrap().0;
            let fm = minus.backward(&x, &y).unwrap().0;
            let num = (fp - fm) / (2.0 * h);
            let rel = relative_error(gi, num);
            assert!(rel < 1e-4, "param {i}: {gi} vs {num}");
        }
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![3.0, 4.0, 12.0];
        assert_eq!(clip_gradient(&mut g, 5.0), 13.0);
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(n <= 5.0 + 1e-12);
    }

    #[test]
    fn zero_pairs_train_to_zero_loss() {
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..20).map(|_| (vec![0.0; 5], vec![0.0; 2])).collect();
        let net = LstmNet::init(5, 2, 4, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            hidden: 4,
            ..Default::default()
        };
        let (_, report) = train(net, &pairs, &cfg).unwrap();
        assert_eq!(report.train_loss, vec![0.0]);
    }

    #[test]
    fn training_is_deterministic() {
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..30)
            .map(|s| {
                let x: Vec<f64> = (0..5).map(|i| ((s + i) as f64 * 0.3).sin()).collect();
                let y = vec![((s + 5) as f64 * 0.3).sin()];
                (x, y)
            })
            .collect();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            hidden: 4,
            seed: 9,
            ..Default::default()
        };
        let run = || train(LstmNet::init(5, 1, 4, 2).unwrap(), &pairs, &cfg).unwrap();
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
    }

    #[test]
    fn text_round_trip() {
        let net = LstmNet::init(3, 2, 2, 8).unwrap();
        let back = LstmNet::from_text(&net.to_text()).unwrap();
        assert_eq!(back, net);
        assert!(LstmNet::from_text("trendcpd-lstm 1\nshape 3 2 2\n1 2\n").is_err());
    }
}
