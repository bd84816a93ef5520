//! Fused scaled dot-product attention.

use crate::error::{shape_err, Result};
use crate::kernels::{gemm_acc, gemm_nt_acc, gemm_tn_acc};
use crate::norm::{softmax_rows, softmax_rows_backward};
use crate::tape::{grad_buf, Node, Op, Tape, Tensor};
use crate::Scalar;

pub(crate) struct AttentionSaved<T> {
    pub(crate) q: Tensor,
    pub(crate) k: Tensor,
    pub(crate) v: Tensor,
    scale: T,
    batches: usize,
    n: usize,
    d: usize,
    dv: usize,
    /// Row-stochastic weights, `[batches, n, n]`.
    weights: Vec<T>,
}

impl<T: Scalar> Tape<T> {
    /// `softmax(scale·q·kᵀ)·v` per batch for `q, k: [B, n, d]`, `v: [B, n, dv]`.
    ///
    /// Equivalent to composing matmul, transpose and softmax, but the
    /// `n×n` scores exist only one batch at a time.
    pub fn attention(&mut self, q: Tensor, k: Tensor, v: Tensor, scale: T) -> Result<Tensor> {
        let (sq, sk, sv) = (self.shape(q).to_vec(), self.shape(k).to_vec(), self.shape(v).to_vec());
        if sq.len() != 3 || sq != sk || sv.len() != 3 || sv[..2] != sq[..2] || sq[1] == 0 {
            return shape_err(format!("attention needs q, k [B, n, d] and v [B, n, dv], got {sq:?}, {sk:?}, {sv:?}"));
        }
        let (batches, n, d, dv) = (sq[0], sq[1], sq[2], sv[2]);
        let (vq, vk, vv) = (self.value(q), self.value(k), self.value(v));
        let mut weights = vec![T::zero(); batches * n * n];
        let mut out = vec![T::zero(); batches * n * dv];
        for b in 0..batches {
            let w = &mut weights[b * n * n..(b + 1) * n * n];
            let (qb, kb) = (&vq[b * n * d..(b + 1) * n * d], &vk[b * n * d..(b + 1) * n * d]);
            gemm_nt_acc(n, d, n, qb, kb, w);
            softmax_rows(w, n, scale);
            gemm_acc(n, n, dv, w, &vv[b * n * dv..(b + 1) * n * dv], &mut out[b * n * dv..(b + 1) * n * dv]);
        }
        let saved = AttentionSaved { q, k, v, scale, batches, n, d, dv, weights };
        Ok(self.push(vec![batches, n, dv], out, Op::Attention(Box::new(saved))))
    }
}

pub(crate) fn attention_backward<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    s: &AttentionSaved<T>,
    g: &[T],
) {
    let (n, d, dv) = (s.n, s.d, s.dv);
    let (vq, vk, vv) = (&nodes[s.q.0].value, &nodes[s.k.0].value, &nodes[s.v.0].value);
    if let Some(dvb) = grad_buf(nodes, grads, s.v) {
        for b in 0..s.batches {
            let w = &s.weights[b * n * n..(b + 1) * n * n];
            let gb = &g[b * n * dv..(b + 1) * n * dv];
            gemm_tn_acc(n, n, dv, w, gb, &mut dvb[b * n * dv..(b + 1) * n * dv]);
        }
    }
    let wants_q = nodes[s.q.0].requires_grad;
    let wants_k = nodes[s.k.0].requires_grad;
    if !wants_q && !wants_k {
        return;
    }
    let mut dscores = vec![T::zero(); s.batches * n * n];
    let mut dw = vec![T::zero(); n * n];
    for b in 0..s.batches {
        let w = &s.weights[b * n * n..(b + 1) * n * n];
        dw.fill(T::zero());
        gemm_nt_acc(n, dv, n, &g[b * n * dv..(b + 1) * n * dv], &vv[b * n * dv..(b + 1) * n * dv], &mut dw);
        softmax_rows_backward(&mut dscores[b * n * n..(b + 1) * n * n], w, &dw, n, s.scale);
    }
    if let Some(dq) = grad_buf(nodes, grads, s.q) {
        for b in 0..s.batches {
            let ds = &dscores[b * n * n..(b + 1) * n * n];
            gemm_acc(n, n, d, ds, &vk[b * n * d..(b + 1) * n * d], &mut dq[b * n * d..(b + 1) * n * d]);
        }
    }
    if let Some(dk) = grad_buf(nodes, grads, s.k) {
        for b in 0..s.batches {
            let ds = &dscores[b * n * n..(b + 1) * n * n];
            gemm_tn_acc(n, n, d, ds, &vq[b * n * d..(b + 1) * n * d], &mut dk[b * n * d..(b + 1) * n * d]);
        }
    }
}
