use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::lstm::{Lstm, LstmCache};
use crate::matrix::{gemv_acc, gemv_t_acc, outer_acc, Matrix};

const LAYER_NORM_EPS: f64 = 1e-5;

/// Declarative description of one layer. Dimensions flow from the network
/// input, so only output widths are given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense { units: usize },
    Relu,
    Tanh,
    LayerNorm,
    Dropout { p: f64 },
    Lstm { hidden: usize },
    Blstm { hidden: usize },
    LogSoftmax,
}

impl LayerSpec {
    pub fn output_dim(&self, input_dim: usize) -> usize {
        match *self {
            LayerSpec::Dense { units } => units,
            LayerSpec::Lstm { hidden } => hidden,
            LayerSpec::Blstm { hidden } => 2 * hidden,
            _ => input_dim,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Dense { units: 0 } => Err(NnError::Config("dense layer with 0 units".into())),
            LayerSpec::Lstm { hidden: 0 } | LayerSpec::Blstm { hidden: 0 } => {
                Err(NnError::Config("recurrent layer with 0 cells".into()))
            }
            LayerSpec::Dropout { p } if !(0.0..1.0).contains(&p) => {
                Err(NnError::Config(format!("dropout rate {p} outside [0, 1)")))
            }
            _ => Ok(()),
        }
    }
}

/// A trainable tensor together with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Param {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            value: vec![0.0; rows * cols],
            grad: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub(crate) fn glorot<R: Rng>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let value = (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect();
        Self {
            value,
            grad: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    fn forward(&self, x: &Matrix) -> Matrix {
        let out = self.weight.rows;
        let mut y = Matrix::zeros(x.rows(), out);
        for t in 0..x.rows() {
            let yr = y.row_mut(t);
            yr.copy_from_slice(&self.bias.value);
            gemv_acc(&self.weight.value, x.row(t), yr);
        }
        y
    }

    fn backward(&mut self, x: &Matrix, g: &Matrix) -> Matrix {
        let mut dx = Matrix::zeros(x.rows(), x.cols());
        for t in 0..x.rows() {
            let gt = g.row(t);
            outer_acc(gt, x.row(t), &mut self.weight.grad);
            for (b, gv) in self.bias.grad.iter_mut().zip(gt) {
                *b += gv;
            }
            gemv_t_acc(&self.weight.value, gt, dx.row_mut(t));
        }
        dx
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: Param,
    pub shift: Param,
}

#[derive(Clone, Debug)]
pub struct Blstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

#[derive(Clone, Debug)]
pub enum Layer {
    Dense(Dense),
    Relu,
    Tanh,
    LayerNorm(LayerNorm),
    Dropout(f64),
    Lstm(Lstm),
    Blstm(Blstm),
    LogSoftmax,
}

/// Per-layer activations kept by a training-mode forward pass.
#[derive(Clone, Debug)]
pub(crate) enum LayerCache {
    Input(Matrix),
    Output(Matrix),
    LayerNorm { normalized: Matrix, inv_std: Vec<f64> },
    Mask(Option<Vec<f64>>),
    Lstm(LstmCache),
    Blstm(LstmCache, LstmCache),
}

/// Whether stochastic layers (dropout) are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl Layer {
    pub(crate) fn build<R: Rng>(spec: &LayerSpec, input_dim: usize, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        Ok(match *spec {
            LayerSpec::Dense { units } => Layer::Dense(Dense {
                weight: Param::glorot(units, input_dim, input_dim, units, rng),
                bias: Param::zeros(1, units),
            }),
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Tanh => Layer::Tanh,
            LayerSpec::LayerNorm => {
                let mut gain = Param::zeros(1, input_dim);
                gain.value.iter_mut().for_each(|g| *g = 1.0);
                Layer::LayerNorm(LayerNorm {
                    gain,
                    shift: Param::zeros(1, input_dim),
                })
            }
            LayerSpec::Dropout { p } => Layer::Dropout(p),
            LayerSpec::Lstm { hidden } => Layer::Lstm(Lstm::new(input_dim, hidden, false, rng)),
            LayerSpec::Blstm { hidden } => Layer::Blstm(Blstm {
                forward: Lstm::new(input_dim, hidden, false, rng),
                backward: Lstm::new(input_dim, hidden, true, rng),
            }),
            LayerSpec::LogSoftmax => Layer::LogSoftmax,
        })
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::LayerNorm(l) => vec![&l.gain, &l.shift],
            Layer::Lstm(l) => l.params(),
            Layer::Blstm(b) => {
                let mut p = b.forward.params();
                p.extend(b.backward.params());
                p
            }
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::LayerNorm(l) => vec![&mut l.gain, &mut l.shift],
            Layer::Lstm(l) => l.params_mut(),
            Layer::Blstm(b) => {
                let mut p = b.forward.params_mut();
                p.extend(b.backward.params_mut());
                p
            }
            _ => Vec::new(),
        }
    }

    pub(crate) fn forward<R: Rng>(
        &self,
        x: &Matrix,
        mode: Mode,
        rng: Option<&mut R>,
        keep: bool,
    ) -> (Matrix, Option<LayerCache>) {
        match self {
            Layer::Dense(d) => (d.forward(x), keep.then(|| LayerCache::Input(x.clone()))),
            Layer::Relu => (x.map(|v| v.max(0.0)), keep.then(|| LayerCache::Input(x.clone()))),
            Layer::Tanh => {
                let y = x.map(f64::tanh);
                let c = keep.then(|| LayerCache::Output(y.clone()));
                (y, c)
            }
            Layer::LayerNorm(ln) => {
                let d = x.cols();
                let mut y = Matrix::zeros(x.rows(), d);
                let mut normalized = Matrix::zeros(x.rows(), d);
                let mut inv_std = Vec::with_capacity(x.rows());
                for t in 0..x.rows() {
                    let xr = x.row(t);
                    let mean = xr.iter().sum::<f64>() / d as f64;
                    let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                    inv_std.push(inv);
                    let nr = normalized.row_mut(t);
                    for (n, v) in nr.iter_mut().zip(xr) {
                        *n = (v - mean) * inv;
                    }
                    let yr = y.row_mut(t);
                    for k in 0..d {
                        yr[k] = ln.gain.value[k] * normalized.get(t, k) + ln.shift.value[k];
                    }
                }
                (y, keep.then_some(LayerCache::LayerNorm { normalized, inv_std }))
            }
            Layer::Dropout(p) => match (mode, rng) {
                (Mode::Train, Some(rng)) if *p > 0.0 => {
                    let scale = 1.0 / (1.0 - p);
                    let mask: Vec<f64> = (0..x.rows() * x.cols())
                        .map(|_| if rng.gen::<f64>() < *p { 0.0 } else { scale })
                        .collect();
                    let mut y = x.clone();
                    for (v, m) in y.as_mut_slice().iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    (y, keep.then_some(LayerCache::Mask(Some(mask))))
                }
                _ => (x.clone(), keep.then_some(LayerCache::Mask(None))),
            },
            Layer::Lstm(l) => {
                let (y, c) = l.forward(x);
                (y, keep.then_some(LayerCache::Lstm(c)))
            }
            Layer::Blstm(b) => {
                let (yf, cf) = b.forward.forward(x);
                let (yb, cb) = b.backward.forward(x);
                let y = Matrix::hstack(&[&yf, &yb]).expect("equal frame counts");
                (y, keep.then_some(LayerCache::Blstm(cf, cb)))
            }
            Layer::LogSoftmax => {
                let mut y = x.clone();
                for t in 0..y.rows() {
                    log_softmax_in_place(y.row_mut(t));
                }
                let c = keep.then(|| LayerCache::Output(y.clone()));
                (y, c)
            }
        }
    }

    pub(crate) fn backward(&mut self, cache: &LayerCache, g: &Matrix) -> Result<Matrix> {
        let mismatch = || NnError::TapeMismatch("cache kind does not match layer kind".into());
        match (self, cache) {
            (Layer::Dense(d), LayerCache::Input(x)) => Ok(d.backward(x, g)),
            (Layer::Relu, LayerCache::Input(x)) => {
                let mut dx = g.clone();
                for (d, v) in dx.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    if *v <= 0.0 {
                        *d = 0.0;
                    }
                }
                Ok(dx)
            }
            (Layer::Tanh, LayerCache::Output(y)) => {
                let mut dx = g.clone();
                for (d, v) in dx.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    *d *= 1.0 - v * v;
                }
                Ok(dx)
            }
            (Layer::LayerNorm(ln), LayerCache::LayerNorm { normalized, inv_std }) => {
                let d = g.cols();
                let mut dx = Matrix::zeros(g.rows(), d);
                let mut dxhat = vec![0.0; d];
                for t in 0..g.rows() {
                    let gt = g.row(t);
                    let nt = normalized.row(t);
                    for k in 0..d {
                        ln.gain.grad[k] += gt[k] * nt[k];
                        ln.shift.grad[k] += gt[k];
                        dxhat[k] = gt[k] * ln.gain.value[k];
                    }
                    let sum_d: f64 = dxhat.iter().sum();
                    let sum_dn: f64 = dxhat.iter().zip(nt).map(|(a, b)| a * b).sum();
                    let scale = inv_std[t] / d as f64;
                    for (k, out) in dx.row_mut(t).iter_mut().enumerate() {
                        *out = scale * (d as f64 * dxhat[k] - sum_d - nt[k] * sum_dn);
                    }
                }
                Ok(dx)
            }
            (Layer::Dropout(_), LayerCache::Mask(mask)) => {
                let mut dx = g.clone();
                if let Some(mask) = mask {
                    for (d, m) in dx.as_mut_slice().iter_mut().zip(mask) {
                        *d *= m;
                    }
                }
                Ok(dx)
            }
            (Layer::Lstm(l), LayerCache::Lstm(c)) => Ok(l.backward(c, g)),
            (Layer::Blstm(b), LayerCache::Blstm(cf, cb)) => {
                let h = b.forward.hidden();
                let gf = g.column_block(0, h)?;
                let gb = g.column_block(h, h)?;
                let mut dx = b.forward.backward(cf, &gf);
                let dxb = b.backward.backward(cb, &gb);
                for (a, v) in dx.as_mut_slice().iter_mut().zip(dxb.as_slice()) {
                    *a += v;
                }
                Ok(dx)
            }
            (Layer::LogSoftmax, LayerCache::Output(y)) => {
                let mut dx = g.clone();
                for t in 0..g.rows() {
                    let sum: f64 = g.row(t).iter().sum();
                    for (d, lp) in dx.row_mut(t).iter_mut().zip(y.row(t)) {
                        *d -= lp.exp() * sum;
                    }
                }
                Ok(dx)
            }
            _ => Err(mismatch()),
        }
    }
}

/// Replaces `row` by `row - logsumexp(row)`.
pub fn log_softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter_mut().for_each(|v| *v -= lse);
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_serializes_with_kind_tag() {
        let s = serde_json::to_string(&LayerSpec::Dropout { p: 0.15 }).unwrap();
        assert_eq!(s, r#"{"kind":"dropout","p":0.15}"#);
        let back: LayerSpec = serde_json::from_str(r#"{"kind":"blstm","hidden":4}"#).unwrap();
        assert_eq!(back, LayerSpec::Blstm { hidden: 4 });
        assert!(serde_json::from_str::<LayerSpec>(r#"{"kind":"dense","units":3,"x":1}"#).is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut rng = rand::rngs::mock::StepRng::new(0, 1);
        assert!(Layer::build(&LayerSpec::Dropout { p: 1.0 }, 3, &mut rng).is_err());
        assert!(Layer::build(&LayerSpec::Dense { units: 0 }, 3, &mut rng).is_err());
        assert!(Layer::build(&LayerSpec::Blstm { hidden: 0 }, 3, &mut rng).is_err());
    }

    #[test]
    fn log_softmax_is_shift_invariant() {
        let mut a = vec![0.3, -1.2, 2.0, 0.0];
        let mut b: Vec<f64> = a.iter().map(|v| v + 17.5).collect();
        log_softmax_in_place(&mut a);
        log_softmax_in_place(&mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let total: f64 = a.iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
