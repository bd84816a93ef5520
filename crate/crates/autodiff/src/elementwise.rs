//! Elementwise arithmetic and activations.
//!
//! Binary ops accept equal shapes, or a right operand whose shape is a
//! trailing suffix of the left operand's shape (bias rows, scalars). The
//! right operand is then repeated over the leading extents.

use crate::error::{shape_err, Result};
use crate::tape::{grad_buf, Node, Op, Tape, Tensor};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

fn broadcast_ok(lhs: &[usize], rhs: &[usize]) -> bool {
    let rn: usize = rhs.iter().product();
    if rn == 1 {
        return true;
    }
    rhs.len() <= lhs.len() && lhs[lhs.len() - rhs.len()..] == *rhs
}

impl<T: Scalar> Tape<T> {
    pub fn binary(&mut self, kind: BinaryOp, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if !broadcast_ok(sa, sb) {
            return shape_err(format!("cannot broadcast {sb:?} onto {sa:?}"));
        }
        let shape = sa.to_vec();
        let (va, vb) = (self.value(a), self.value(b));
        let f = match kind {
            BinaryOp::Add => |x: T, y: T| x + y,
            BinaryOp::Sub => |x: T, y: T| x - y,
            BinaryOp::Mul => |x: T, y: T| x * y,
        };
        let value: Vec<T> = if vb.len() == 1 {
            let y = vb[0];
            va.iter().map(|&x| f(x, y)).collect()
        } else {
            va.chunks_exact(vb.len())
                .flat_map(|row| row.iter().zip(vb).map(|(&x, &y)| f(x, y)))
                .collect()
        };
        let op = match kind {
            BinaryOp::Add => Op::Add(a, b),
            BinaryOp::Sub => Op::Sub(a, b),
            BinaryOp::Mul => Op::Mul(a, b),
        };
        Ok(self.push(shape, value, op))
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn scale(&mut self, a: Tensor, k: T) -> Tensor {
        let value = self.value(a).iter().map(|&x| x * k).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, value, Op::Scale(a, k))
    }

    pub fn relu(&mut self, a: Tensor) -> Tensor {
        let value = self.value(a).iter().map(|&x| x.max(T::zero())).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, value, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Tensor) -> Tensor {
        let value = self.value(a).iter().map(|&x| x.tanh()).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, value, Op::Tanh(a))
    }
}

/// Shared by add (`sign = 1`) and sub (`sign = -1`).
pub(crate) fn add_backward<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    a: Tensor,
    b: Tensor,
    g: &[T],
    sign: T,
) {
    if let Some(da) = grad_buf(nodes, grads, a) {
        for (d, &gv) in da.iter_mut().zip(g) {
            *d = *d + gv;
        }
    }
    if let Some(db) = grad_buf(nodes, grads, b) {
        let n = db.len();
        for row in g.chunks_exact(n) {
            for (d, &gv) in db.iter_mut().zip(row) {
                *d = *d + sign * gv;
            }
        }
    }
}

pub(crate) fn mul_backward<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    a: Tensor,
    b: Tensor,
    g: &[T],
) {
    let n = nodes[b.0].value.len();
    if let Some(da) = grad_buf(nodes, grads, a) {
        let vb = &nodes[b.0].value;
        for (drow, grow) in da.chunks_exact_mut(n).zip(g.chunks_exact(n)) {
            for ((d, &gv), &y) in drow.iter_mut().zip(grow).zip(vb) {
                *d = *d + gv * y;
            }
        }
    }
    if let Some(db) = grad_buf(nodes, grads, b) {
        let va = &nodes[a.0].value;
        for (grow, arow) in g.chunks_exact(n).zip(va.chunks_exact(n)) {
            for ((d, &gv), &x) in db.iter_mut().zip(grow).zip(arow) {
                *d = *d + gv * x;
            }
        }
    }
}
