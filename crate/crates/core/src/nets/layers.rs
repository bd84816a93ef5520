use seastate_autodiff::{Scalar, Tape, Tensor};

use crate::error::Result;

/// Fixed sinusoidal position table, `n_tokens × d` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalEncoding {
    pub n_tokens: usize,
    pub d: usize,
    pub table: Vec<f64>,
}

impl PositionalEncoding {
    pub fn new(n_tokens: usize, d: usize) -> Self {
        let mut table = vec![0.0; n_tokens * d];
        for pos in 0..n_tokens {
            for i in (0..d).step_by(2) {
                let angle = pos as f64 / 10_000f64.powf(i as f64 / d as f64);
                table[pos * d + i] = angle.sin();
                if i + 1 < d {
                    table[pos * d + i + 1] = angle.cos();
                }
            }
        }
        Self { n_tokens, d, table }
    }

    pub fn get(&self, pos: usize, channel: usize) -> f64 {
        self.table[pos * self.d + channel]
    }

    pub(crate) fn constant<T: Scalar>(&self, tape: &mut Tape<T>) -> Result<Tensor> {
        Ok(tape.constant(&[self.n_tokens, self.d], self.table.iter().map(|&v| T::of(v)).collect())?)
    }
}

/// `x·w + b` over the last axis.
pub fn dense<T: Scalar>(tape: &mut Tape<T>, x: Tensor, w: Tensor, b: Tensor) -> Result<Tensor> {
    let y = tape.matmul(x, w)?;
    Ok(tape.add(y, b)?)
}

/// Projections of one attention head, each `d_model × d_model/n_heads`.
#[derive(Debug, Clone, Copy)]
pub struct HeadWeights {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
}

/// softmax(QKᵀ/√d_k) for `x: [B, N, d_model]`, shape `[B, N, N]`.
pub fn attention_weights<T: Scalar>(tape: &mut Tape<T>, x: Tensor, head: &HeadWeights, d_k: f64) -> Result<Tensor> {
    let q = tape.matmul(x, head.wq)?;
    let k = tape.matmul(x, head.wk)?;
    let kt = tape.transpose(k)?;
    let s = tape.matmul(q, kt)?;
    Ok(tape.softmax_scaled(s, T::of(1.0 / d_k.sqrt()))?)
}

/// Self-attention with Q = K = V = x; heads are concatenated and mixed by `wl`.
pub fn multi_head_attention<T: Scalar>(
    tape: &mut Tape<T>,
    x: Tensor,
    heads: &[HeadWeights],
    wl: Tensor,
    d_k: f64,
) -> Result<Tensor> {
    let mut outs = Vec::with_capacity(heads.len());
    for h in heads {
        let q = tape.matmul(x, h.wq)?;
        let k = tape.matmul(x, h.wk)?;
        let v = tape.matmul(x, h.wv)?;
        outs.push(tape.attention(q, k, v, T::of(1.0 / d_k.sqrt()))?);
    }
    let cat = if outs.len() == 1 { outs[0] } else { tape.concat_last(&outs)? };
    Ok(tape.matmul(cat, wl)?)
}

/// Two residual MHA sublayers, each followed by layer normalisation.
pub fn attention_block<T: Scalar>(
    tape: &mut Tape<T>,
    x: Tensor,
    mha: [(&[HeadWeights], Tensor); 2],
    d_k: f64,
) -> Result<Tensor> {
    let mut y = x;
    for (heads, wl) in mha {
        let m = multi_head_attention(tape, y, heads, wl, d_k)?;
        let r = tape.add(y, m)?;
        y = tape.layer_norm(r)?;
    }
    Ok(y)
}
