use crate::error::{shape_err, Result};
use crate::kernels::{gemm_acc, gemm_nt_acc, gemm_tn_acc, transpose_into};
use crate::tape::{grad_buf, Node, Op, Tape, Tensor};
use crate::Scalar;

pub(crate) struct MatMulSaved {
    pub(crate) a: Tensor,
    pub(crate) b: Tensor,
    batches: usize,
    m: usize,
    k: usize,
    n: usize,
    /// `b` is one `k×n` matrix applied to every batch.
    shared_b: bool,
}

pub(crate) struct TransposeSaved {
    pub(crate) a: Tensor,
    batches: usize,
    rows: usize,
    cols: usize,
}

impl<T: Scalar> Tape<T> {
    /// Matrix product over the last two axes.
    ///
    /// `a: [.., m, k]` times `b: [k, n]` applies one matrix to every leading
    /// index; `a: [B, m, k]` times `b: [B, k, n]` is a batched product.
    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() < 2 || sb.len() < 2 {
            return shape_err(format!("matmul needs matrices, got {sa:?} and {sb:?}"));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != kb {
            return shape_err(format!("matmul inner extents differ: {sa:?} · {sb:?}"));
        }
        let lead = &sa[..sa.len() - 2];
        let batches: usize = lead.iter().product();
        let shared_b = sb.len() == 2;
        if !shared_b && sb[..sb.len() - 2] != *lead {
            return shape_err(format!("matmul batch extents differ: {sa:?} · {sb:?}"));
        }
        let (va, vb) = (self.value(a), self.value(b));
        let mut out = vec![T::zero(); batches * m * n];
        if shared_b {
            gemm_acc(batches * m, k, n, va, vb, &mut out);
        } else {
            for i in 0..batches {
                gemm_acc(
                    m,
                    k,
                    n,
                    &va[i * m * k..(i + 1) * m * k],
                    &vb[i * k * n..(i + 1) * k * n],
                    &mut out[i * m * n..(i + 1) * m * n],
                );
            }
        }
        let mut shape = lead.to_vec();
        shape.extend([m, n]);
        let saved = MatMulSaved { a, b, batches, m, k, n, shared_b };
        Ok(self.push(shape, out, Op::MatMul(saved)))
    }

    /// Swap the last two axes.
    pub fn transpose(&mut self, a: Tensor) -> Result<Tensor> {
        let sa = self.shape(a).to_vec();
        if sa.len() < 2 {
            return shape_err(format!("transpose needs at least 2 axes, got {sa:?}"));
        }
        let (rows, cols) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let batches: usize = sa[..sa.len() - 2].iter().product();
        let va = self.value(a);
        let mut out = vec![T::zero(); va.len()];
        let block = rows * cols;
        for i in 0..batches {
            transpose_into(rows, cols, &va[i * block..(i + 1) * block], &mut out[i * block..(i + 1) * block]);
        }
        let mut shape = sa;
        let last = shape.len() - 1;
        shape.swap(last - 1, last);
        Ok(self.push(shape, out, Op::Transpose(TransposeSaved { a, batches, rows, cols })))
    }

    pub fn reshape(&mut self, a: Tensor, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.numel(a) {
            return shape_err(format!("cannot reshape {:?} into {shape:?}", self.shape(a)));
        }
        let value = self.value(a).to_vec();
        Ok(self.push(shape.to_vec(), value, Op::Reshape(a)))
    }

    /// Concatenate along the last axis; all leading extents must agree.
    pub fn concat_last(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        let Some(&first) = parts.first() else {
            return shape_err("concat of zero tensors");
        };
        let s0 = self.shape(first).to_vec();
        let Some((_, lead)) = s0.split_last() else {
            return shape_err("concat needs at least one axis");
        };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != s0.len() || s[..s.len() - 1] != *lead {
                return shape_err(format!("concat leading extents differ: {s0:?} vs {s:?}"));
            }
            widths.push(s[s.len() - 1]);
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        Ok(self.push(shape, out, Op::ConcatLast { parts: parts.to_vec(), widths }))
    }
}

pub(crate) fn matmul_backward<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    s: &MatMulSaved,
    g: &[T],
) {
    let (batches, m, k, n) = (s.batches, s.m, s.k, s.n);
    let va = &nodes[s.a.0].value;
    let vb = &nodes[s.b.0].value;
    if let Some(da) = grad_buf(nodes, grads, s.a) {
        if s.shared_b {
            gemm_nt_acc(batches * m, n, k, g, vb, da);
        } else {
            for i in 0..batches {
                gemm_nt_acc(
                    m,
                    n,
                    k,
                    &g[i * m * n..(i + 1) * m * n],
                    &vb[i * k * n..(i + 1) * k * n],
                    &mut da[i * m * k..(i + 1) * m * k],
                );
            }
        }
    }
    if let Some(db) = grad_buf(nodes, grads, s.b) {
        if s.shared_b {
            gemm_tn_acc(k, batches * m, n, va, g, db);
        } else {
            for i in 0..batches {
                gemm_tn_acc(
                    k,
                    m,
                    n,
                    &va[i * m * k..(i + 1) * m * k],
                    &g[i * m * n..(i + 1) * m * n],
                    &mut db[i * k * n..(i + 1) * k * n],
                );
            }
        }
    }
}

pub(crate) fn transpose_backward<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    s: &TransposeSaved,
    g: &[T],
) {
    if let Some(da) = grad_buf(nodes, grads, s.a) {
        let block = s.rows * s.cols;
        let mut tmp = vec![T::zero(); block];
        for i in 0..s.batches {
            transpose_into(s.cols, s.rows, &g[i * block..(i + 1) * block], &mut tmp);
            for (d, &v) in da[i * block..(i + 1) * block].iter_mut().zip(&tmp) {
                *d = *d + v;
            }
        }
    }
}

pub(crate) fn concat_backward<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    parts: &[Tensor],
    widths: &[usize],
    g: &[T],
) {
    let total: usize = widths.iter().sum();
    let mut offset = 0;
    for (&p, &w) in parts.iter().zip(widths) {
        if let Some(dp) = grad_buf(nodes, grads, p) {
            for (drow, grow) in dp.chunks_exact_mut(w).zip(g.chunks_exact(total)) {
                for (d, &gv) in drow.iter_mut().zip(&grow[offset..offset + w]) {
                    *d = *d + gv;
                }
            }
        }
        offset += w;
    }
}
