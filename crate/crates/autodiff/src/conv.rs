//! Valid (unpadded, stride 1) 2-D cross-correlation and non-overlapping
//! pooling along the last axis.

use crate::error::{arg_err, shape_err, Result};
use crate::kernels::{gemm_acc, gemm_nt_acc, gemm_tn_acc};
use crate::tape::{grad_buf, Node, Op, Tape, Tensor};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy)]
struct ConvGeometry {
    batches: usize,
    channels: usize,
    height: usize,
    width: usize,
    filters: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeometry {
    /// Rows of the unrolled patch matrix (`C·kh·kw`).
    fn patch(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

pub(crate) struct ConvSaved<T> {
    pub(crate) input: Tensor,
    pub(crate) kernels: Tensor,
    pub(crate) bias: Option<Tensor>,
    geo: ConvGeometry,
    /// Per batch, the `patch × positions` unrolled input.
    cols: Vec<T>,
}

/// Unroll one `C×H×W` image into a `patch × positions` matrix.
fn im2col<T: Scalar>(x: &[T], geo: &ConvGeometry, cols: &mut [T]) {
    let p = geo.positions();
    let mut q = 0;
    for c in 0..geo.channels {
        for di in 0..geo.kh {
            for dj in 0..geo.kw {
                let row = &mut cols[q * p..(q + 1) * p];
                for oi in 0..geo.oh {
                    let src = (c * geo.height + oi + di) * geo.width + dj;
                    row[oi * geo.ow..(oi + 1) * geo.ow].copy_from_slice(&x[src..src + geo.ow]);
                }
                q += 1;
            }
        }
    }
}

fn col2im_acc<T: Scalar>(dcols: &[T], geo: &ConvGeometry, dx: &mut [T]) {
    let p = geo.positions();
    let mut q = 0;
    for c in 0..geo.channels {
        for di in 0..geo.kh {
            for dj in 0..geo.kw {
                let row = &dcols[q * p..(q + 1) * p];
                for oi in 0..geo.oh {
                    let dst = (c * geo.height + oi + di) * geo.width + dj;
                    for (d, &v) in dx[dst..dst + geo.ow].iter_mut().zip(&row[oi * geo.ow..(oi + 1) * geo.ow]) {
                        *d = *d + v;
                    }
                }
                q += 1;
            }
        }
    }
}

impl<T: Scalar> Tape<T> {
    /// `input: [B, C, H, W]` (or `[C, H, W]`), `kernels: [F, C, kh, kw]`,
    /// optional `bias: [F]`. Output `[B, F, H-kh+1, W-kw+1]`.
    pub fn conv2d_valid(&mut self, input: Tensor, kernels: Tensor, bias: Option<Tensor>) -> Result<Tensor> {
        let si = self.shape(input).to_vec();
        let sk = self.shape(kernels).to_vec();
        let (batched, dims) = match si.len() {
            4 => (true, [si[0], si[1], si[2], si[3]]),
            3 => (false, [1, si[0], si[1], si[2]]),
            _ => return shape_err(format!("conv input must be [B,C,H,W] or [C,H,W], got {si:?}")),
        };
        if sk.len() != 4 {
            return shape_err(format!("conv kernels must be [F,C,kh,kw], got {sk:?}"));
        }
        let [batches, channels, height, width] = dims;
        let [filters, kc, kh, kw] = [sk[0], sk[1], sk[2], sk[3]];
        if kc != channels {
            return shape_err(format!("kernel channels {kc} differ from input channels {channels}"));
        }
        if kh > height || kw > width || kh == 0 || kw == 0 {
            return shape_err(format!("kernel {kh}×{kw} does not fit input {height}×{width}"));
        }
        if let Some(b) = bias {
            if self.shape(b) != [filters] {
                return shape_err(format!("bias must be [{filters}], got {:?}", self.shape(b)));
            }
        }
        let geo = ConvGeometry {
            batches,
            channels,
            height,
            width,
            filters,
            kh,
            kw,
            oh: height - kh + 1,
            ow: width - kw + 1,
        };
        let (q, p) = (geo.patch(), geo.positions());
        let x = self.value(input);
        let k = self.value(kernels);
        let mut cols = vec![T::zero(); batches * q * p];
        let mut out = vec![T::zero(); batches * filters * p];
        let image = channels * height * width;
        for bi in 0..batches {
            let c = &mut cols[bi * q * p..(bi + 1) * q * p];
            im2col(&x[bi * image..(bi + 1) * image], &geo, c);
            let o = &mut out[bi * filters * p..(bi + 1) * filters * p];
            if let Some(b) = bias {
                for (row, &bv) in o.chunks_exact_mut(p).zip(self.value(b)) {
                    row.fill(bv);
                }
            }
            gemm_acc(filters, q, p, k, c, o);
        }
        let shape = if batched {
            vec![batches, filters, geo.oh, geo.ow]
        } else {
            vec![filters, geo.oh, geo.ow]
        };
        let requires = [input, kernels].iter().chain(bias.iter()).any(|&t| self.requires_grad(t));
        let saved = ConvSaved { input, kernels, bias, geo, cols: if requires { cols } else { Vec::new() } };
        Ok(self.push(shape, out, Op::Conv2d(Box::new(saved))))
    }

    /// Non-overlapping pooling along the last axis; a trailing remainder
    /// shorter than `window` is dropped.
    pub fn pool(&mut self, a: Tensor, kind: PoolKind, window: usize) -> Result<Tensor> {
        if window < 1 {
            return arg_err("pool window must be at least 1");
        }
        let sa = self.shape(a).to_vec();
        let Some(&len) = sa.last() else {
            return shape_err("cannot pool a scalar");
        };
        if window > len {
            return shape_err(format!("pool window {window} exceeds axis extent {len}"));
        }
        let out_len = len / window;
        let va = self.value(a);
        let rows = va.len() / len;
        let mut out = Vec::with_capacity(rows * out_len);
        let mut argmax = Vec::new();
        for r in 0..rows {
            let row = &va[r * len..(r + 1) * len];
            for w in 0..out_len {
                let seg = &row[w * window..(w + 1) * window];
                match kind {
                    PoolKind::Max => {
                        let (best, &v) = seg
                            .iter()
                            .enumerate()
                            .fold((0, &seg[0]), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
                        argmax.push(r * len + w * window + best);
                        out.push(v);
                    }
                    PoolKind::Avg => {
                        let s = seg.iter().fold(T::zero(), |acc, &v| acc + v);
                        out.push(s / T::of(window as f64));
                    }
                }
            }
        }
        let mut shape = sa;
        *shape.last_mut().expect("non-empty shape") = out_len;
        let op = match kind {
            PoolKind::Max => Op::MaxPool { a, argmax },
            PoolKind::Avg => Op::AvgPool { a, window, in_len: len },
        };
        Ok(self.push(shape, out, op))
    }
}

pub(crate) fn conv2d_backward<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    s: &ConvSaved<T>,
    g: &[T],
) {
    let geo = &s.geo;
    let (q, p, f) = (geo.patch(), geo.positions(), geo.filters);
    if let Some(b) = s.bias {
        if let Some(db) = grad_buf(nodes, grads, b) {
            for gb in g.chunks_exact(f * p) {
                for (d, row) in db.iter_mut().zip(gb.chunks_exact(p)) {
                    *d = *d + row.iter().fold(T::zero(), |acc, &v| acc + v);
                }
            }
        }
    }
    if let Some(dk) = grad_buf(nodes, grads, s.kernels) {
        // dK[F×Q] += dOut[F×P] · colsᵀ[P×Q]
        for bi in 0..geo.batches {
            gemm_nt_acc(f, p, q, &g[bi * f * p..(bi + 1) * f * p], &s.cols[bi * q * p..(bi + 1) * q * p], dk);
        }
    }
    if nodes[s.input.0].requires_grad {
        // dCols[Q×P] = Kᵀ[Q×F] · dOut[F×P], then scatter back to the image.
        let kernels = &nodes[s.kernels.0].value;
        let image = geo.channels * geo.height * geo.width;
        let dx = grad_buf(nodes, grads, s.input).expect("input requires grad");
        let mut dcols = vec![T::zero(); q * p];
        for bi in 0..geo.batches {
            dcols.fill(T::zero());
            gemm_tn_acc(q, f, p, kernels, &g[bi * f * p..(bi + 1) * f * p], &mut dcols);
            col2im_acc(&dcols, geo, &mut dx[bi * image..(bi + 1) * image]);
        }
    }
}

pub(crate) fn avg_pool_backward<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    a: Tensor,
    window: usize,
    in_len: usize,
    g: &[T],
) {
    if let Some(da) = grad_buf(nodes, grads, a) {
        let out_len = in_len / window;
        let inv = T::one() / T::of(window as f64);
        for (drow, grow) in da.chunks_exact_mut(in_len).zip(g.chunks_exact(out_len)) {
            for (w, &gv) in grow.iter().enumerate() {
                for d in &mut drow[w * window..(w + 1) * window] {
                    *d = *d + gv * inv;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_kernel_sums_windows() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(&[1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let k = tape.constant(&[1, 1, 1, 3], vec![1.0; 3]).unwrap();
        let y = tape.conv2d_valid(x, k, None).unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 2]);
        assert_eq!(tape.value(y), &[6.0, 9.0]);
    }

    #[test]
    fn delta_kernel_shifts() {
        let mut tape = Tape::<f64>::new();
        let xs: Vec<f64> = (0..8).map(|v| v as f64).collect();
        let x = tape.constant(&[1, 1, 8], xs.clone()).unwrap();
        let k = tape.constant(&[1, 1, 1, 3], vec![0.0, 0.0, 1.0]).unwrap();
        let y = tape.conv2d_valid(x, k, None).unwrap();
        assert_eq!(tape.value(y), &xs[2..]);
    }

    #[test]
    fn dof_spanning_kernel_gives_token_count() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(&[3, 1, 1501], vec![0.5; 3 * 1501]).unwrap();
        let k = tape.constant(&[1, 3, 1, 125], vec![0.01; 375]).unwrap();
        let y = tape.conv2d_valid(x, k, None).unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 1377]);
    }

    #[test]
    fn oversized_kernel_is_shape_error() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(&[1, 2, 4], vec![0.0; 8]).unwrap();
        let k = tape.constant(&[1, 1, 3, 1], vec![0.0; 3]).unwrap();
        assert!(matches!(tape.conv2d_valid(x, k, None), Err(crate::Error::Shape(_))));
    }

    #[test]
    fn pooling_examples() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(&[4], vec![1.0, 5.0, 2.0, 2.0]).unwrap();
        let m = tape.pool(x, PoolKind::Max, 2).unwrap();
        assert_eq!(tape.value(m), &[5.0, 2.0]);
        let id = tape.pool(x, PoolKind::Max, 1).unwrap();
        assert_eq!(tape.value(id), tape.value(x));
        let y = tape.constant(&[4], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let a = tape.pool(y, PoolKind::Avg, 2).unwrap();
        assert_eq!(tape.value(a), &[2.0, 6.0]);
        let r = tape.constant(&[5], vec![1.0, 3.0, 5.0, 7.0, 100.0]).unwrap();
        let a = tape.pool(r, PoolKind::Avg, 2).unwrap();
        assert_eq!(tape.value(a), &[2.0, 6.0]);
        assert!(matches!(tape.pool(y, PoolKind::Max, 0), Err(crate::Error::Argument(_))));
    }
}
