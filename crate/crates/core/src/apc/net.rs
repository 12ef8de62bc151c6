use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twofloat::TwoFloat;

use super::{ApcConfig, CellKind};
use crate::corpus::FrameMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LayerLayout {
    pub input: usize,
    pub w_in: usize,
    pub w_rec: usize,
    pub bias: usize,
    pub residual: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub layers: Vec<LayerLayout>,
    pub w_out: usize,
    pub b_out: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &ApcConfig) -> Layout {
        let h = cfg.hidden_dim;
        let gh = cfg.cell.gates() * h;
        let mut off = 0;
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let input = if l == 0 { cfg.input_dim } else { h };
            let w_in = off;
            let w_rec = w_in + gh * input;
            let bias = w_rec + gh * h;
            off = bias + gh;
            layers.push(LayerLayout {
                input,
                w_in,
                w_rec,
                bias,
                residual: input == h,
            });
        }
        let w_out = off;
        let b_out = w_out + cfg.input_dim * h;
        Layout {
            layers,
            w_out,
            b_out,
            total: b_out + cfg.input_dim,
        }
    }
}

/// Trained or freshly initialized APC network.
#[derive(Debug, Clone, PartialEq)]
pub struct ApcModel {
    config: ApcConfig,
    pub(crate) layout: Layout,
    pub(crate) params: Vec<f64>,
}

pub struct ForwardOutput {
    /// x̂, one row per input frame.
    pub predictions: Vec<Vec<f64>>,
    /// Top-layer activations h_L, one row per input frame.
    pub top_hidden: Vec<Vec<f64>>,
}

/// Scalar arithmetic the forward pass needs, so the same recurrence can run
/// in `f64` and in double-double precision.
pub(crate) trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn of(v: f64) -> Self;
    fn exp(self) -> Self;
    fn tanh(self) -> Self;
}

impl Real for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
}

impl Real for TwoFloat {
    fn of(v: f64) -> Self {
        TwoFloat::from(v)
    }
    fn exp(self) -> Self {
        TwoFloat::exp(self)
    }
    fn tanh(self) -> Self {
        TwoFloat::tanh(self)
    }
}

/// Per-layer activations kept for backpropagation.
pub(crate) struct LayerCache<T> {
    pub inputs: Vec<Vec<T>>,
    /// Gate activations after the nonlinearity, `G·H` per step.
    pub gates: Vec<Vec<T>>,
    pub cells: Vec<Vec<T>>,
    pub hidden: Vec<Vec<T>>,
    pub outputs: Vec<Vec<T>>,
}

fn sigmoid<T: Real>(x: T) -> T {
    T::of(1.0) / (T::of(1.0) + (-x).exp())
}

fn matvec_acc<T: Real>(out: &mut [T], w: &[T], x: &[T]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = T::of(0.0);
        for (&a, &b) in row.iter().zip(x) {
            acc += a * b;
        }
        *o += acc;
    }
}

fn matvec_t_acc(out: &mut [f64], w: &[f64], dz: &[f64]) {
    let cols = out.len();
    for (r, &g) in dz.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * g;
        }
    }
}

fn outer_acc(grad: &mut [f64], dz: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &g) in dz.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &mut grad[r * cols..(r + 1) * cols];
        for (o, v) in row.iter_mut().zip(x) {
            *o += g * v;
        }
    }
}

impl ApcModel {
    /// Parameters drawn uniformly from ±1/√H with a seeded generator.
    pub fn init(config: &ApcConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let k = 1.0 / (config.hidden_dim as f64).sqrt();
        let params = (0..layout.total).map(|_| rng.random_range(-k..k)).collect();
        Ok(ApcModel {
            config: config.clone(),
            layout,
            params,
        })
    }

    pub fn zeros(config: &ApcConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        Ok(ApcModel {
            config: config.clone(),
            params: vec![0.0; layout.total],
            layout,
        })
    }

    pub fn from_params(config: &ApcConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        if params.len() != layout.total {
            return Err(Error::Data(format!(
                "expected {} parameters, found {}",
                layout.total,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Data("non-finite model parameter".into()));
        }
        Ok(ApcModel {
            config: config.clone(),
            layout,
            params,
        })
    }

    pub fn config(&self) -> &ApcConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, x: &FrameMatrix) -> Result<()> {
        if x.dim() != self.config.input_dim {
            return Err(Error::Argument(format!(
                "input has dim {}, model expects {}",
                x.dim(),
                self.config.input_dim
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &FrameMatrix) -> Result<ForwardOutput> {
        self.check_input(x)?;
        let rows: Vec<Vec<f64>> = x.rows().map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect();
        let (predictions, caches) = self.forward_cached(&self.params, &rows);
        Ok(ForwardOutput {
            predictions,
            top_hidden: caches.into_iter().last().expect("at least one layer").outputs,
        })
    }

    /// Forward pass with an explicit parameter vector, keeping activations.
    pub(crate) fn forward_cached<T: Real>(
        &self,
        p: &[T],
        x: &[Vec<T>],
    ) -> (Vec<Vec<T>>, Vec<LayerCache<T>>) {
        let h = self.config.hidden_dim;
        let g = self.config.cell.gates();
        let zero = T::of(0.0);
        let mut caches: Vec<LayerCache<T>> = Vec::with_capacity(self.layout.layers.len());
        let mut input: Vec<Vec<T>> = x.to_vec();
        for lay in &self.layout.layers {
            let w_in = &p[lay.w_in..lay.w_rec];
            let w_rec = &p[lay.w_rec..lay.bias];
            let bias = &p[lay.bias..lay.bias + g * h];
            let mut cache = LayerCache {
                inputs: input,
                gates: Vec::new(),
                cells: Vec::new(),
                hidden: Vec::new(),
                outputs: Vec::new(),
            };
            let mut h_prev = vec![zero; h];
            let mut c_prev = vec![zero; h];
            for xt in &cache.inputs {
                let mut z = bias.to_vec();
                matvec_acc(&mut z, w_in, xt);
                matvec_acc(&mut z, w_rec, &h_prev);
                let (ht, ct) = match self.config.cell {
                    CellKind::Lstm => {
                        for (k, v) in z.iter_mut().enumerate() {
                            *v = if k / h == 2 { v.tanh() } else { sigmoid(*v) };
                        }
                        let mut ct = vec![zero; h];
                        let mut ht = vec![zero; h];
                        for j in 0..h {
                            let (i, f, gg, o) = (z[j], z[h + j], z[2 * h + j], z[3 * h + j]);
                            ct[j] = f * c_prev[j] + i * gg;
                            ht[j] = o * ct[j].tanh();
                        }
                        (ht, ct)
                    }
                    CellKind::SimpleRnn => {
                        z.iter_mut().for_each(|v| *v = v.tanh());
                        (z.clone(), Vec::new())
                    }
                };
                let out: Vec<T> = if lay.residual {
                    ht.iter().zip(xt).map(|(&a, &b)| a + b).collect()
                } else {
                    ht.clone()
                };
                cache.gates.push(z);
                cache.cells.push(ct.clone());
                cache.hidden.push(ht.clone());
                cache.outputs.push(out);
                h_prev = ht;
                c_prev = ct;
            }
            input = cache.outputs.clone();
            caches.push(cache);
        }
        let w_out = &p[self.layout.w_out..self.layout.b_out];
        let b_out = &p[self.layout.b_out..self.layout.total];
        let top = &caches.last().expect("at least one layer").outputs;
        let preds = top
            .iter()
            .map(|ht| {
                let mut y = b_out.to_vec();
                matvec_acc(&mut y, w_out, ht);
                y
            })
            .collect();
        (preds, caches)
    }

    /// Loss and its gradient with respect to every parameter.
    pub(crate) fn loss_and_grad(&self, x: &[Vec<f64>]) -> (f64, Vec<f64>) {
        let n = self.config.prediction_step;
        let h = self.config.hidden_dim;
        let g = self.config.cell.gates();
        let p = &self.params;
        let (preds, caches) = self.forward_cached(p, x);
        let mut grad = vec![0.0; p.len()];
        let t_len = x.len();

        let mut loss = 0.0;
        let mut dtop = vec![vec![0.0; h]; t_len];
        let w_out = &p[self.layout.w_out..self.layout.b_out];
        let top = &caches.last().expect("at least one layer").outputs;
        for t in 0..t_len.saturating_sub(n) {
            let s: Vec<f64> = preds[t]
                .iter()
                .zip(&x[t + n])
                .map(|(a, b)| {
                    let r = a - b;
                    loss += r.abs();
                    if r > 0.0 {
                        1.0
                    } else if r < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            outer_acc(&mut grad[self.layout.w_out..self.layout.b_out], &s, &top[t]);
            for (gb, sv) in grad[self.layout.b_out..].iter_mut().zip(&s) {
                *gb += sv;
            }
            matvec_t_acc(&mut dtop[t], w_out, &s);
        }

        let mut dout = dtop;
        for (lay, cache) in self.layout.layers.iter().zip(&caches).rev() {
            let w_in = &p[lay.w_in..lay.w_rec];
            let w_rec = &p[lay.w_rec..lay.bias];
            let mut dinput = vec![vec![0.0; lay.input]; t_len];
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            let zero = vec![0.0; h];
            for t in (0..t_len).rev() {
                let dh: Vec<f64> = dout[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
                if lay.residual {
                    for (di, v) in dinput[t].iter_mut().zip(&dout[t]) {
                        *di += v;
                    }
                }
                let h_prev = if t > 0 { &cache.hidden[t - 1] } else { &zero };
                let act = &cache.gates[t];
                let mut dz = vec![0.0; g * h];
                match self.config.cell {
                    CellKind::Lstm => {
                        let c_prev = if t > 0 { &cache.cells[t - 1] } else { &zero };
                        let ct = &cache.cells[t];
                        for j in 0..h {
                            let (i, f, gg, o) = (act[j], act[h + j], act[2 * h + j], act[3 * h + j]);
                            let tc = ct[j].tanh();
                            let dc = dh[j] * o * (1.0 - tc * tc) + dc_next[j];
                            dz[j] = dc * gg * i * (1.0 - i);
                            dz[h + j] = dc * c_prev[j] * f * (1.0 - f);
                            dz[2 * h + j] = dc * i * (1.0 - gg * gg);
                            dz[3 * h + j] = dh[j] * tc * o * (1.0 - o);
                            dc_next[j] = dc * f;
                        }
                    }
                    CellKind::SimpleRnn => {
                        for j in 0..h {
                            dz[j] = dh[j] * (1.0 - act[j] * act[j]);
                        }
                    }
                }
                outer_acc(&mut grad[lay.w_in..lay.w_rec], &dz, &cache.inputs[t]);
                outer_acc(&mut grad[lay.w_rec..lay.bias], &dz, h_prev);
                for (gb, v) in grad[lay.bias..lay.bias + g * h].iter_mut().zip(&dz) {
                    *gb += v;
                }
                matvec_t_acc(&mut dinput[t], w_in, &dz);
                dh_next = vec![0.0; h];
                matvec_t_acc(&mut dh_next, w_rec, &dz);
            }
            dout = dinput;
        }
        (loss, grad)
    }
}

/// Σ over t ≤ T−n of ‖x̂_t − x_{t+n}‖₁.
pub fn apc_loss(predictions: &[Vec<f64>], x: &FrameMatrix, n: usize) -> Result<f64> {
    let t_len = x.nframes();
    if t_len <= n {
        return Err(Error::InsufficientLength {
            utt: String::new(),
            nframes: t_len,
            step: n,
        });
    }
    if predictions.len() < t_len - n {
        return Err(Error::Argument(format!(
            "{} predictions for {} targets",
            predictions.len(),
            t_len - n
        )));
    }
    let mut loss = 0.0;
    for (t, pred) in predictions.iter().enumerate().take(t_len - n) {
        let target = x.row(t + n);
        if pred.len() != target.len() {
            return Err(Error::Argument("prediction and target dims differ".into()));
        }
        loss += pred
            .iter()
            .zip(target)
            .map(|(p, &y)| (p - f64::from(y)).abs())
            .sum::<f64>();
    }
    Ok(loss)
}
