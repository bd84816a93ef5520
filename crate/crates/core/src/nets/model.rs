use std::collections::HashMap;

use rand::{Rng, RngCore};
use seastate_autodiff::{BatchStats, Mode, PoolKind, RunningStats, Scalar, Tape, Tensor};

use super::config::{Architecture, AtNnConfig, CnnRegConfig, CNN_K1, CNN_K2};
use super::layers::{attention_block, dense, HeadWeights, PositionalEncoding};
use crate::error::{Error, Result};

/// Named trainable array.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
}

/// Behaviour of the stochastic and batch-dependent layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Dropout active, batch norm on batch statistics.
    Train,
    /// Deterministic.
    Infer,
    /// Dropout active, batch norm on running statistics.
    McDropout,
}

impl ForwardMode {
    fn dropout(self) -> Mode {
        match self {
            ForwardMode::Train | ForwardMode::McDropout => Mode::Train,
            ForwardMode::Infer => Mode::Infer,
        }
    }
}

/// Output of [`Model::head`]. `batch_stats` is filled in train mode and is
/// folded into the running statistics by [`Model::apply_batch_stats`].
pub struct Forward<T> {
    pub output: Tensor,
    pub batch_stats: Vec<BatchStats<T>>,
}

/// Intermediate AT-NN tensors exposed for shape checks.
pub struct AtNnTrace {
    /// `[B, n_embeddings, n_tokens]`.
    pub token_map: Tensor,
    /// `[B, n_tokens·n_embeddings]`.
    pub flattened: Tensor,
    pub output: Tensor,
}

enum Init {
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
}

struct Spec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

fn spec(name: impl Into<String>, shape: &[usize], init: Init) -> Spec {
    Spec { name: name.into(), shape: shape.to_vec(), init }
}

fn glorot(fan_in: usize, fan_out: usize) -> Init {
    Init::Glorot { fan_in, fan_out }
}

/// A network: its architecture, parameters and batch-norm running statistics.
#[derive(Debug, Clone)]
pub struct Model<T> {
    arch: Architecture,
    params: Vec<Param<T>>,
    running: Vec<RunningStats<T>>,
    index: HashMap<String, usize>,
    pe: Option<PositionalEncoding>,
}

impl<T: Scalar> Model<T> {
    /// Build with Glorot-uniform weights and zero biases.
    pub fn build<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let specs = layout(&arch);
        let params = specs
            .into_iter()
            .map(|s| {
                let n: usize = s.shape.iter().product();
                let value = match s.init {
                    Init::Glorot { fan_in, fan_out } => {
                        let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        (0..n).map(|_| T::of(rng.random_range(-lim..lim))).collect()
                    }
                    Init::Zeros => vec![T::zero(); n],
                    Init::Ones => vec![T::one(); n],
                };
                Param { name: s.name, shape: s.shape, value }
            })
            .collect();
        let running = bn_widths(&arch).into_iter().map(RunningStats::new).collect();
        Self::assemble(arch, params, running)
    }

    /// Reassemble from stored arrays; names and shapes must match the layout.
    pub fn from_parts(arch: Architecture, params: Vec<Param<T>>, running: Vec<RunningStats<T>>) -> Result<Self> {
        arch.validate()?;
        let specs = layout(&arch);
        if specs.len() != params.len()
            || specs.iter().zip(&params).any(|(s, p)| s.name != p.name || s.shape != p.shape)
        {
            return Err(Error::Data("parameter list does not match the architecture".into()));
        }
        if params.iter().any(|p| p.value.len() != p.shape.iter().product::<usize>()) {
            return Err(Error::Data("parameter value count does not match its shape".into()));
        }
        let widths = bn_widths(&arch);
        if running.len() != widths.len()
            || running.iter().zip(&widths).any(|(r, &w)| r.mean.len() != w || r.var.len() != w)
        {
            return Err(Error::Data("running statistics do not match the architecture".into()));
        }
        Self::assemble(arch, params, running)
    }

    fn assemble(arch: Architecture, params: Vec<Param<T>>, running: Vec<RunningStats<T>>) -> Result<Self> {
        let index = params.iter().enumerate().map(|(i, p)| (p.name.clone(), i)).collect();
        let pe = match &arch {
            Architecture::AtNn(c) => Some(PositionalEncoding::new(c.n_tokens(), c.n_embeddings)),
            Architecture::CnnReg(_) => None,
        };
        Ok(Self { arch, params, running, index, pe })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn kind(&self) -> &'static str {
        self.arch.kind()
    }

    pub fn signal_len(&self) -> usize {
        self.arch.signal_len()
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn running_stats(&self) -> &[RunningStats<T>] {
        &self.running
    }

    pub fn n_params(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Same model in another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::of(x.as_f64())).collect::<Vec<U>>();
        Model {
            arch: self.arch.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param { name: p.name.clone(), shape: p.shape.clone(), value: conv(&p.value) })
                .collect(),
            running: self
                .running
                .iter()
                .map(|r| RunningStats { mean: conv(&r.mean), var: conv(&r.var), momentum: r.momentum })
                .collect(),
            index: self.index.clone(),
            pe: self.pe.clone(),
        }
    }

    /// Start the output layer near the constant-mean predictor: bias set to
    /// the (scaled) target mean, weights shrunk by `weight_scale`.
    pub fn init_output(&mut self, target_mean: [f64; 3], weight_scale: f64) -> Result<()> {
        if !(weight_scale.is_finite() && weight_scale >= 0.0) {
            return Err(Error::Argument(format!("output weight scale must be nonnegative, got {weight_scale}")));
        }
        for p in &mut self.params {
            match p.name.as_str() {
                "out.bias" => p.value = target_mean.iter().map(|&v| T::of(v)).collect(),
                "out.weight" => p.value.iter_mut().for_each(|v| *v = *v * T::of(weight_scale)),
                _ => {}
            }
        }
        Ok(())
    }

    /// Record every parameter on `tape`, as trainable leaves or constants.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Result<Vec<Tensor>> {
        self.params
            .iter()
            .map(|p| Ok(tape.leaf(&p.shape, p.value.clone(), trainable)?))
            .collect()
    }

    /// Like [`Model::bind`] with constants, but only the parameters read by
    /// [`Model::head`] are copied; trunk slots hold a placeholder.
    pub fn bind_head(&self, tape: &mut Tape<T>) -> Result<Vec<Tensor>> {
        let placeholder = tape.scalar(T::zero());
        self.params
            .iter()
            .map(|p| {
                if self.in_trunk(&p.name) {
                    Ok(placeholder)
                } else {
                    Ok(tape.constant(&p.shape, p.value.clone())?)
                }
            })
            .collect()
    }

    fn in_trunk(&self, name: &str) -> bool {
        let prefix = name.split('.').next().unwrap_or(name);
        match self.arch {
            Architecture::AtNn(_) => prefix == "embed" || prefix == "dense0" || prefix.starts_with("block"),
            Architecture::CnnReg(_) => matches!(prefix, "conv1" | "conv2" | "dense"),
        }
    }

    /// Record a batch `[b, 3, signal_len]` as a constant input.
    pub fn input(&self, tape: &mut Tape<T>, values: Vec<T>, batch: usize) -> Result<Tensor> {
        let l = self.signal_len();
        if values.len() != batch * 3 * l {
            return Err(Error::Tensor(seastate_autodiff::Error::Shape(format!(
                "expected {batch}×3×{l} input values, got {}",
                values.len()
            ))));
        }
        Ok(tape.constant(&[batch, 3, l], values)?)
    }

    fn p(&self, bound: &[Tensor], name: &str) -> Tensor {
        bound[self.index[name]]
    }

    fn check_input(&self, tape: &Tape<T>, x: Tensor) -> Result<usize> {
        let s = tape.shape(x);
        if s.len() != 3 || s[1] != 3 || s[2] != self.signal_len() {
            return Err(Error::Tensor(seastate_autodiff::Error::Shape(format!(
                "expected input [batch, 3, {}], got {s:?}",
                self.signal_len()
            ))));
        }
        Ok(s[0])
    }

    /// Deterministic part of the network, up to the first dropout layer.
    pub fn features(&self, tape: &mut Tape<T>, bound: &[Tensor], x: Tensor) -> Result<Tensor> {
        Ok(match &self.arch {
            Architecture::AtNn(c) => self.at_nn_trunk(tape, bound, x, c)?.2,
            Architecture::CnnReg(c) => self.cnn_trunk(tape, bound, x, c)?,
        })
    }

    /// Remaining layers from the first dropout to the output.
    pub fn head(
        &self,
        tape: &mut Tape<T>,
        bound: &[Tensor],
        features: Tensor,
        mode: ForwardMode,
        rng: &mut dyn RngCore,
    ) -> Result<Forward<T>> {
        match &self.arch {
            Architecture::AtNn(c) => self.at_nn_head(tape, bound, features, c, mode, rng),
            Architecture::CnnReg(c) => {
                let h = tape.dropout(features, c.dropout_p, mode.dropout(), rng)?;
                let y = dense(tape, h, self.p(bound, "out.weight"), self.p(bound, "out.bias"))?;
                Ok(Forward { output: tape.relu(y), batch_stats: vec![] })
            }
        }
    }

    /// `x: [b, 3, signal_len]` to scaled predictions `[b, 3]`.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        bound: &[Tensor],
        x: Tensor,
        mode: ForwardMode,
        rng: &mut dyn RngCore,
    ) -> Result<Forward<T>> {
        let f = self.features(tape, bound, x)?;
        self.head(tape, bound, f, mode, rng)
    }

    /// Fold train-mode batch statistics into the running averages.
    pub fn apply_batch_stats(&mut self, stats: &[BatchStats<T>]) {
        for (r, s) in self.running.iter_mut().zip(stats) {
            r.update(s);
        }
    }

    /// Infer-mode predictions for `batch` records laid out `[b, 3, L]`.
    pub fn predict(&self, values: Vec<T>, batch: usize) -> Result<Vec<T>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false)?;
        let x = self.input(&mut tape, values, batch)?;
        let out = self.forward(&mut tape, &bound, x, ForwardMode::Infer, &mut rand::rng())?;
        Ok(tape.value(out.output).to_vec())
    }

    /// AT-NN forward pass exposing the token map and flattened tensor.
    pub fn trace_at_nn(&self, tape: &mut Tape<T>, bound: &[Tensor], x: Tensor) -> Result<AtNnTrace> {
        let Architecture::AtNn(c) = &self.arch else {
            return Err(Error::KindMismatch { expected: "at_nn".into(), found: self.kind().into() });
        };
        let (token_map, flattened, f) = self.at_nn_trunk(tape, bound, x, c)?;
        let out = self.at_nn_head(tape, bound, f, c, ForwardMode::Infer, &mut rand::rng())?;
        Ok(AtNnTrace { token_map, flattened, output: out.output })
    }

    fn at_nn_trunk(&self, tape: &mut Tape<T>, bound: &[Tensor], x: Tensor, c: &AtNnConfig) -> Result<(Tensor, Tensor, Tensor)> {
        let b = self.check_input(tape, x)?;
        let (e, n) = (c.n_embeddings, c.n_tokens());
        let x4 = tape.reshape(x, &[b, 1, 3, c.signal_len])?;
        let conv = tape.conv2d_valid(x4, self.p(bound, "embed.kernel"), Some(self.p(bound, "embed.bias")))?;
        let token_map = tape.reshape(conv, &[b, e, n])?;
        let tokens = tape.transpose(token_map)?;
        let pe = self.pe.as_ref().expect("AT-NN carries a positional table").constant(tape)?;
        let mut y = tape.add(tokens, pe)?;
        let d_k = c.d_k() as f64;
        for blk in 0..c.n_blocks {
            let mut mha = Vec::with_capacity(2);
            for m in 0..2 {
                let heads: Vec<HeadWeights> = (0..c.mha.n_heads)
                    .map(|h| {
                        let pre = format!("block{blk}.mha{m}.head{h}");
                        HeadWeights {
                            wq: self.p(bound, &format!("{pre}.wq")),
                            wk: self.p(bound, &format!("{pre}.wk")),
                            wv: self.p(bound, &format!("{pre}.wv")),
                        }
                    })
                    .collect();
                mha.push((heads, self.p(bound, &format!("block{blk}.mha{m}.wl"))));
            }
            y = attention_block(tape, y, [(&mha[0].0, mha[0].1), (&mha[1].0, mha[1].1)], d_k)?;
        }
        let flat = tape.reshape(y, &[b, n * e])?;
        let h = dense(tape, flat, self.p(bound, "dense0.weight"), self.p(bound, "dense0.bias"))?;
        Ok((token_map, flat, tape.relu(h)))
    }

    fn at_nn_head(
        &self,
        tape: &mut Tape<T>,
        bound: &[Tensor],
        features: Tensor,
        c: &AtNnConfig,
        mode: ForwardMode,
        rng: &mut dyn RngCore,
    ) -> Result<Forward<T>> {
        let hidden = c.head_widths.len() - 1;
        let mut stats = Vec::new();
        let mut h = features;
        for i in 0..hidden {
            if i > 0 {
                let z = dense(tape, h, self.p(bound, &format!("dense{i}.weight")), self.p(bound, &format!("dense{i}.bias")))?;
                h = tape.relu(z);
            }
            h = tape.dropout(h, c.dropout_p, mode.dropout(), rng)?;
            let (g, bt) = (self.p(bound, &format!("bn{i}.gamma")), self.p(bound, &format!("bn{i}.beta")));
            h = match mode {
                ForwardMode::Train => {
                    let (t, s) = tape.batch_norm_train(h, g, bt)?;
                    stats.push(s);
                    t
                }
                ForwardMode::Infer | ForwardMode::McDropout => tape.batch_norm_infer(h, g, bt, &self.running[i])?,
            };
        }
        let y = dense(tape, h, self.p(bound, "out.weight"), self.p(bound, "out.bias"))?;
        Ok(Forward { output: tape.relu(y), batch_stats: stats })
    }

    fn cnn_trunk(&self, tape: &mut Tape<T>, bound: &[Tensor], x: Tensor, c: &CnnRegConfig) -> Result<Tensor> {
        let b = self.check_input(tape, x)?;
        let x4 = tape.reshape(x, &[b, 1, 3, c.signal_len])?;
        let c1 = tape.conv2d_valid(x4, self.p(bound, "conv1.kernel"), Some(self.p(bound, "conv1.bias")))?;
        let c1 = tape.tanh(c1);
        let p1 = tape.pool(c1, PoolKind::Max, c.pool_window)?;
        let c2 = tape.conv2d_valid(p1, self.p(bound, "conv2.kernel"), Some(self.p(bound, "conv2.bias")))?;
        let c2 = tape.tanh(c2);
        let p2 = tape.pool(c2, PoolKind::Max, c.pool_window)?;
        let flat = tape.reshape(p2, &[b, c.flat_len()])?;
        let h = dense(tape, flat, self.p(bound, "dense.weight"), self.p(bound, "dense.bias"))?;
        Ok(tape.tanh(h))
    }
}

fn bn_widths(arch: &Architecture) -> Vec<usize> {
    match arch {
        Architecture::AtNn(c) => c.head_widths[..c.head_widths.len() - 1].to_vec(),
        Architecture::CnnReg(_) => vec![],
    }
}

fn layout(arch: &Architecture) -> Vec<Spec> {
    let mut v = Vec::new();
    match arch {
        Architecture::AtNn(c) => {
            let (e, t) = (c.n_embeddings, c.token_size);
            v.push(spec("embed.kernel", &[e, 1, 3, t], glorot(3 * t, e * 3 * t)));
            v.push(spec("embed.bias", &[e], Init::Zeros));
            let dh = e / c.mha.n_heads;
            for blk in 0..c.n_blocks {
                for m in 0..2 {
                    for h in 0..c.mha.n_heads {
                        for w in ["wq", "wk", "wv"] {
                            v.push(spec(format!("block{blk}.mha{m}.head{h}.{w}"), &[e, dh], glorot(e, dh)));
                        }
                    }
                    v.push(spec(format!("block{blk}.mha{m}.wl"), &[e, e], glorot(e, e)));
                }
            }
            let mut fan_in = c.flat_len();
            let hidden = &c.head_widths[..c.head_widths.len() - 1];
            for (i, &w) in hidden.iter().enumerate() {
                v.push(spec(format!("dense{i}.weight"), &[fan_in, w], glorot(fan_in, w)));
                v.push(spec(format!("dense{i}.bias"), &[w], Init::Zeros));
                v.push(spec(format!("bn{i}.gamma"), &[w], Init::Ones));
                v.push(spec(format!("bn{i}.beta"), &[w], Init::Zeros));
                fan_in = w;
            }
            v.push(spec("out.weight", &[fan_in, 3], glorot(fan_in, 3)));
            v.push(spec("out.bias", &[3], Init::Zeros));
        }
        Architecture::CnnReg(c) => {
            let f = c.filters();
            v.push(spec("conv1.kernel", &[f, 1, 3, CNN_K1], glorot(3 * CNN_K1, f * 3 * CNN_K1)));
            v.push(spec("conv1.bias", &[f], Init::Zeros));
            v.push(spec("conv2.kernel", &[f, f, 1, CNN_K2], glorot(f * CNN_K2, f * CNN_K2)));
            v.push(spec("conv2.bias", &[f], Init::Zeros));
            let (n, d) = (c.flat_len(), c.dense_width());
            v.push(spec("dense.weight", &[n, d], glorot(n, d)));
            v.push(spec("dense.bias", &[d], Init::Zeros));
            v.push(spec("out.weight", &[d, 3], glorot(d, 3)));
            v.push(spec("out.bias", &[3], Init::Zeros));
        }
    }
    v
}
