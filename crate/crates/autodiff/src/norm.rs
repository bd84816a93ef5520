//! Normalisations, softmax and dropout.

use rand::Rng;

use crate::error::{arg_err, shape_err, Result};
use crate::tape::{grad_buf, Node, Op, Tape, Tensor};
use crate::Scalar;

/// Variance floor added before the square root in layer normalisation.
pub const NORM_EPS: f64 = 1e-5;

/// Variance floor for batch normalisation. Larger than [`NORM_EPS`] so a
/// unit that was almost constant in training cannot be amplified without
/// bound at inference.
pub const BATCH_NORM_EPS: f64 = 1e-2;

/// Whether stochastic / batch-dependent layers run in training behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Exponential moving averages of batch statistics used at inference.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    /// Weight kept by the old value on each update.
    pub momentum: f64,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(features: usize) -> Self {
        Self { mean: vec![T::zero(); features], var: vec![T::one(); features], momentum: 0.9 }
    }

    pub fn update(&mut self, batch: &BatchStats<T>) {
        let keep = T::of(self.momentum);
        let take = T::one() - keep;
        for (r, &b) in self.mean.iter_mut().zip(&batch.mean) {
            *r = keep * *r + take * b;
        }
        for (r, &b) in self.var.iter_mut().zip(&batch.var) {
            *r = keep * *r + take * b;
        }
    }
}

/// Per-feature population mean and variance of one training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

pub(crate) struct BatchNormSaved<T> {
    pub(crate) x: Tensor,
    pub(crate) gamma: Tensor,
    pub(crate) beta: Tensor,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    /// Normalised with the batch's own statistics (train mode).
    batch_stats: bool,
}

impl<T: Scalar> Tape<T> {
    /// Softmax over the last axis, computed on max-shifted inputs.
    pub fn softmax_lastaxis(&mut self, a: Tensor) -> Result<Tensor> {
        self.softmax_scaled(a, T::one())
    }

    /// `softmax(k·a)` over the last axis without materialising `k·a`.
    pub fn softmax_scaled(&mut self, a: Tensor, k: T) -> Result<Tensor> {
        let n = match self.shape(a).last() {
            Some(&n) if n > 0 => n,
            _ => return shape_err("softmax needs a non-empty last axis"),
        };
        let mut out = self.value(a).to_vec();
        softmax_rows(&mut out, n, k);
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Softmax { a, n, k }))
    }

    /// Zero-mean, unit-variance normalisation of each last-axis slice,
    /// without learned scale or shift.
    pub fn layer_norm(&mut self, a: Tensor) -> Result<Tensor> {
        let n = match self.shape(a).last() {
            Some(&n) if n >= 2 => n,
            _ => return shape_err("layer norm needs a last axis of extent >= 2"),
        };
        let eps = T::of(NORM_EPS);
        let nf = T::of(n as f64);
        let mut out = self.value(a).to_vec();
        let mut inv_std = Vec::with_capacity(out.len() / n);
        for row in out.chunks_exact_mut(n) {
            let mean = row.iter().fold(T::zero(), |s, &v| s + v) / nf;
            let var = row.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean)) / nf;
            let inv = T::one() / (var + eps).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * inv;
            }
            inv_std.push(inv);
        }
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::LayerNorm { a, n, inv_std }))
    }

    /// Batch normalisation of `x: [batch, features]` using the batch's own
    /// statistics. Returns the output and the statistics used.
    pub fn batch_norm_train(&mut self, x: Tensor, gamma: Tensor, beta: Tensor) -> Result<(Tensor, BatchStats<T>)> {
        let (b, f) = self.bn_dims(x, gamma, beta)?;
        if b < 2 {
            return arg_err(format!("batch norm in train mode needs batch >= 2, got {b}"));
        }
        let vx = self.value(x);
        let bf = T::of(b as f64);
        let mut mean = vec![T::zero(); f];
        for row in vx.chunks_exact(f) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m = *m + v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / bf);
        let mut var = vec![T::zero(); f];
        for row in vx.chunks_exact(f) {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                *s = *s + (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s = *s / bf);
        let stats = BatchStats { mean, var };
        let t = self.batch_norm_with(x, gamma, beta, &stats.mean, &stats.var, true);
        Ok((t, stats))
    }

    /// Batch normalisation with fixed (running) statistics.
    pub fn batch_norm_infer(
        &mut self,
        x: Tensor,
        gamma: Tensor,
        beta: Tensor,
        stats: &RunningStats<T>,
    ) -> Result<Tensor> {
        let (_, f) = self.bn_dims(x, gamma, beta)?;
        if stats.mean.len() != f || stats.var.len() != f {
            return shape_err(format!("running stats cover {} features, input has {f}", stats.mean.len()));
        }
        Ok(self.batch_norm_with(x, gamma, beta, &stats.mean, &stats.var, false))
    }

    /// Mode-dispatching batch norm: train normalises by batch statistics and
    /// folds them into `stats`; infer reads `stats`.
    pub fn batch_norm(
        &mut self,
        x: Tensor,
        gamma: Tensor,
        beta: Tensor,
        mode: Mode,
        stats: &mut RunningStats<T>,
    ) -> Result<Tensor> {
        match mode {
            Mode::Train => {
                let (t, batch) = self.batch_norm_train(x, gamma, beta)?;
                stats.update(&batch);
                Ok(t)
            }
            Mode::Infer => self.batch_norm_infer(x, gamma, beta, stats),
        }
    }

    fn bn_dims(&self, x: Tensor, gamma: Tensor, beta: Tensor) -> Result<(usize, usize)> {
        let s = self.shape(x);
        if s.len() != 2 {
            return shape_err(format!("batch norm expects [batch, features], got {s:?}"));
        }
        let f = s[1];
        if self.shape(gamma) != [f] || self.shape(beta) != [f] {
            return shape_err(format!("batch norm scale/shift must be [{f}]"));
        }
        Ok((s[0], f))
    }

    fn batch_norm_with(&mut self, x: Tensor, gamma: Tensor, beta: Tensor, mean: &[T], var: &[T], batch_stats: bool) -> Tensor {
        let eps = T::of(BATCH_NORM_EPS);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let f = mean.len();
        let mut xhat = self.value(x).to_vec();
        for row in xhat.chunks_exact_mut(f) {
            for ((v, &m), &s) in row.iter_mut().zip(mean).zip(&inv_std) {
                *v = (*v - m) * s;
            }
        }
        let (g, bt) = (self.value(gamma), self.value(beta));
        let mut out = xhat.clone();
        for row in out.chunks_exact_mut(f) {
            for ((v, &gv), &bv) in row.iter_mut().zip(g).zip(bt) {
                *v = *v * gv + bv;
            }
        }
        let shape = self.shape(x).to_vec();
        let saved = BatchNormSaved { x, gamma, beta, xhat, inv_std, batch_stats };
        self.push(shape, out, Op::BatchNorm(Box::new(saved)))
    }

    /// Inverted dropout: in train mode each element is zeroed with
    /// probability `p` and survivors are scaled by `1/(1-p)`; infer mode and
    /// `p = 0` return `a` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Tensor, p: f64, mode: Mode, rng: &mut R) -> Result<Tensor> {
        if !(0.0..1.0).contains(&p) {
            return arg_err(format!("dropout probability must lie in [0, 1), got {p}"));
        }
        if mode == Mode::Infer || p == 0.0 {
            return Ok(a);
        }
        let keep = T::of(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.numel(a))
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
            .collect();
        let value = self.value(a).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, value, Op::Dropout { a, mask }))
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail = ca.remainder().iter().zip(cb.remainder()).fold(T::zero(), |s, (&x, &y)| s + x * y);
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] = acc[i] + x[i] * y[i];
        }
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

/// Fold `xs` with eight independent accumulators so the loop vectorises.
#[inline(always)]
fn lanes<T: Scalar>(xs: &[T], init: T, f: impl Fn(T, T) -> T) -> T {
    let mut acc = [init; 8];
    let mut chunks = xs.chunks_exact(8);
    for c in &mut chunks {
        for (a, &v) in acc.iter_mut().zip(c) {
            *a = f(*a, v);
        }
    }
    let tail = chunks.remainder().iter().fold(init, |a, &v| f(a, v));
    acc.iter().fold(tail, |a, &v| f(a, v))
}

/// In-place `softmax(k·row)` of every length-`n` row of `buf`.
pub(crate) fn softmax_rows<T: Scalar>(buf: &mut [T], n: usize, k: T) {
    for row in buf.chunks_exact_mut(n) {
        let max = lanes(row, T::neg_infinity(), |m, v| if v > m { v } else { m });
        for v in row.iter_mut() {
            *v = (k * (*v - max)).exp_fast();
        }
        let inv = T::one() / lanes(row, T::zero(), |s, v| s + v);
        for v in row.iter_mut() {
            *v = *v * inv;
        }
    }
}

/// `d += k·y⊙(g − ⟨y, g⟩)` row by row: the input gradient of
/// `y = softmax(k·x)`.
pub(crate) fn softmax_rows_backward<T: Scalar>(d: &mut [T], y: &[T], g: &[T], n: usize, k: T) {
    for ((drow, yrow), grow) in d.chunks_exact_mut(n).zip(y.chunks_exact(n)).zip(g.chunks_exact(n)) {
        let dot = dot(yrow, grow);
        for ((d, &yv), &gv) in drow.iter_mut().zip(yrow).zip(grow) {
            *d = *d + k * yv * (gv - dot);
        }
    }
}

pub(crate) fn softmax_backward<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    a: Tensor,
    n: usize,
    k: T,
    y: &[T],
    g: &[T],
) {
    if let Some(da) = grad_buf(nodes, grads, a) {
        softmax_rows_backward(da, y, g, n, k);
    }
}

pub(crate) fn layer_norm_backward<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    a: Tensor,
    n: usize,
    inv_std: &[T],
    y: &[T],
    g: &[T],
) {
    if let Some(da) = grad_buf(nodes, grads, a) {
        let nf = T::of(n as f64);
        for (((drow, yrow), grow), &s) in da
            .chunks_exact_mut(n)
            .zip(y.chunks_exact(n))
            .zip(g.chunks_exact(n))
            .zip(inv_std)
        {
            let mean_g = grow.iter().fold(T::zero(), |acc, &v| acc + v) / nf;
            let mean_gy = grow.iter().zip(yrow).fold(T::zero(), |acc, (&gv, &yv)| acc + gv * yv) / nf;
            for ((d, &yv), &gv) in drow.iter_mut().zip(yrow).zip(grow) {
                *d = *d + s * (gv - mean_g - yv * mean_gy);
            }
        }
    }
}

pub(crate) fn batch_norm_backward<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    s: &BatchNormSaved<T>,
    g: &[T],
) {
    let f = s.inv_std.len();
    let b = g.len() / f;
    let gamma = &nodes[s.gamma.0].value;
    if let Some(dg) = grad_buf(nodes, grads, s.gamma) {
        for (grow, xrow) in g.chunks_exact(f).zip(s.xhat.chunks_exact(f)) {
            for ((d, &gv), &xv) in dg.iter_mut().zip(grow).zip(xrow) {
                *d = *d + gv * xv;
            }
        }
    }
    if let Some(db) = grad_buf(nodes, grads, s.beta) {
        for grow in g.chunks_exact(f) {
            for (d, &gv) in db.iter_mut().zip(grow) {
                *d = *d + gv;
            }
        }
    }
    if let Some(dx) = grad_buf(nodes, grads, s.x) {
        if s.batch_stats {
            let bf = T::of(b as f64);
            let mut mean_g = vec![T::zero(); f];
            let mut mean_gx = vec![T::zero(); f];
            for (grow, xrow) in g.chunks_exact(f).zip(s.xhat.chunks_exact(f)) {
                for j in 0..f {
                    let gh = grow[j] * gamma[j];
                    mean_g[j] = mean_g[j] + gh;
                    mean_gx[j] = mean_gx[j] + gh * xrow[j];
                }
            }
            mean_g.iter_mut().chain(mean_gx.iter_mut()).for_each(|v| *v = *v / bf);
            for ((drow, grow), xrow) in dx.chunks_exact_mut(f).zip(g.chunks_exact(f)).zip(s.xhat.chunks_exact(f)) {
                for j in 0..f {
                    let gh = grow[j] * gamma[j];
                    drow[j] = drow[j] + s.inv_std[j] * (gh - mean_g[j] - xrow[j] * mean_gx[j]);
                }
            }
        } else {
            for (drow, grow) in dx.chunks_exact_mut(f).zip(g.chunks_exact(f)) {
                for j in 0..f {
                    drow[j] = drow[j] + grow[j] * gamma[j] * s.inv_std[j];
                }
            }
        }
    }
}
