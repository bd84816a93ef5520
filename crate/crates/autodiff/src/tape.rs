use crate::error::{arg_err, shape_err, Result};
use crate::Scalar;
use crate::{attention, conv, elementwise, linalg, norm, reduce};

/// Handle to a value recorded on a [`Tape`].
///
/// Handles are only meaningful for the tape that produced them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tensor(pub(crate) usize);

impl Tensor {
    pub fn id(self) -> usize {
        self.0
    }
}

pub(crate) struct Node<T> {
    pub(crate) shape: Vec<usize>,
    pub(crate) value: Vec<T>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op<T>,
}

/// Recorded operation together with whatever the backward rule needs.
pub(crate) enum Op<T> {
    Leaf,
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Scale(Tensor, T),
    Relu(Tensor),
    Tanh(Tensor),
    MatMul(linalg::MatMulSaved),
    Transpose(linalg::TransposeSaved),
    Reshape(Tensor),
    ConcatLast { parts: Vec<Tensor>, widths: Vec<usize> },
    Conv2d(Box<conv::ConvSaved<T>>),
    MaxPool { a: Tensor, argmax: Vec<usize> },
    AvgPool { a: Tensor, window: usize, in_len: usize },
    Softmax { a: Tensor, n: usize, k: T },
    Attention(Box<attention::AttentionSaved<T>>),
    LayerNorm { a: Tensor, n: usize, inv_std: Vec<T> },
    BatchNorm(Box<norm::BatchNormSaved<T>>),
    Dropout { a: Tensor, mask: Vec<T> },
    Sum(Tensor),
    Mean(Tensor),
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Tensor> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Tanh(a)
            | Op::Reshape(a)
            | Op::Sum(a)
            | Op::Mean(a) => vec![*a],
            Op::MatMul(s) => vec![s.a, s.b],
            Op::Transpose(s) => vec![s.a],
            Op::ConcatLast { parts, .. } => parts.clone(),
            Op::Conv2d(s) => {
                let mut v = vec![s.input, s.kernels];
                v.extend(s.bias);
                v
            }
            Op::MaxPool { a, .. }
            | Op::AvgPool { a, .. }
            | Op::Softmax { a, .. }
            | Op::LayerNorm { a, .. }
            | Op::Dropout { a, .. } => vec![*a],
            Op::BatchNorm(s) => vec![s.x, s.gamma, s.beta],
            Op::Attention(s) => vec![s.q, s.k, s.v],
        }
    }
}

/// Append-only record of a computation, differentiated by [`Tape::backward`].
///
/// Operations are recorded in execution order, so the node list is already
/// topologically sorted and backward simply walks it in reverse.
pub struct Tape<T> {
    pub(crate) nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record an input array. Leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, shape: &[usize], values: Vec<T>, requires_grad: bool) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return shape_err(format!(
                "shape {shape:?} holds {numel} values but {} were given",
                values.len()
            ));
        }
        Ok(self.push_raw(shape.to_vec(), values, requires_grad, Op::Leaf))
    }

    /// Trainable leaf.
    pub fn param(&mut self, shape: &[usize], values: Vec<T>) -> Result<Tensor> {
        self.leaf(shape, values, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, shape: &[usize], values: Vec<T>) -> Result<Tensor> {
        self.leaf(shape, values, false)
    }

    pub fn scalar(&mut self, v: T) -> Tensor {
        self.push_raw(vec![], vec![v], false, Op::Leaf)
    }

    pub fn shape(&self, t: Tensor) -> &[usize] {
        &self.nodes[t.0].shape
    }

    pub fn value(&self, t: Tensor) -> &[T] {
        &self.nodes[t.0].value
    }

    pub fn numel(&self, t: Tensor) -> usize {
        self.nodes[t.0].value.len()
    }

    pub fn requires_grad(&self, t: Tensor) -> bool {
        self.nodes[t.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to the leaf `t`,
    /// when `t` participates in the differentiated graph.
    pub fn grad(&self, t: Tensor) -> Option<&[T]> {
        self.grads.get(t.0).and_then(|g| g.as_deref())
    }

    /// Record an op output. Ops whose inputs are all gradient-free are
    /// stored as plain leaves so no backward state is kept alive.
    pub(crate) fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>) -> Tensor {
        let requires_grad = op.inputs().iter().any(|t| self.nodes[t.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.push_raw(shape, value, requires_grad, op)
    }

    fn push_raw(&mut self, shape: Vec<usize>, value: Vec<T>, requires_grad: bool, op: Op<T>) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, requires_grad, op });
        Tensor(self.nodes.len() - 1)
    }

    /// Populate gradients of the scalar `loss` with respect to every
    /// gradient-requiring leaf it depends on. Gradients from a previous
    /// call are discarded; those of intermediate results are released as
    /// soon as they have been propagated.
    pub fn backward(&mut self, loss: Tensor) -> Result<()> {
        if self.numel(loss) != 1 {
            return arg_err(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            ));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![T::one()]);
        let (nodes, grads) = (&self.nodes, &mut self.grads);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            propagate(nodes, grads, id, &g);
            if matches!(nodes[id].op, Op::Leaf) {
                grads[id] = Some(g);
            }
        }
        Ok(())
    }
}

/// Zero-initialised gradient buffer for `t`, or `None` when `t` is not
/// differentiated.
pub(crate) fn grad_buf<'g, T: Scalar>(
    nodes: &[Node<T>],
    grads: &'g mut [Option<Vec<T>>],
    t: Tensor,
) -> Option<&'g mut Vec<T>> {
    let node = &nodes[t.0];
    if !node.requires_grad {
        return None;
    }
    Some(grads[t.0].get_or_insert_with(|| vec![T::zero(); node.value.len()]))
}

fn propagate<T: Scalar>(nodes: &[Node<T>], grads: &mut [Option<Vec<T>>], id: usize, g: &[T]) {
    let node = &nodes[id];
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => elementwise::add_backward(nodes, grads, *a, *b, g, T::one()),
        Op::Sub(a, b) => elementwise::add_backward(nodes, grads, *a, *b, g, -T::one()),
        Op::Mul(a, b) => elementwise::mul_backward(nodes, grads, *a, *b, g),
        Op::Scale(a, k) => {
            if let Some(da) = grad_buf(nodes, grads, *a) {
                for (d, &gv) in da.iter_mut().zip(g) {
                    *d = *d + gv * *k;
                }
            }
        }
        Op::Relu(a) => {
            if let Some(da) = grad_buf(nodes, grads, *a) {
                for ((d, &gv), &y) in da.iter_mut().zip(g).zip(&node.value) {
                    if y > T::zero() {
                        *d = *d + gv;
                    }
                }
            }
        }
        Op::Tanh(a) => {
            if let Some(da) = grad_buf(nodes, grads, *a) {
                for ((d, &gv), &y) in da.iter_mut().zip(g).zip(&node.value) {
                    *d = *d + gv * (T::one() - y * y);
                }
            }
        }
        Op::MatMul(s) => linalg::matmul_backward(nodes, grads, s, g),
        Op::Transpose(s) => linalg::transpose_backward(nodes, grads, s, g),
        Op::Reshape(a) => {
            if let Some(da) = grad_buf(nodes, grads, *a) {
                for (d, &gv) in da.iter_mut().zip(g) {
                    *d = *d + gv;
                }
            }
        }
        Op::ConcatLast { parts, widths } => linalg::concat_backward(nodes, grads, parts, widths, g),
        Op::Conv2d(s) => conv::conv2d_backward(nodes, grads, s, g),
        Op::MaxPool { a, argmax } => {
            if let Some(da) = grad_buf(nodes, grads, *a) {
                for (&src, &gv) in argmax.iter().zip(g) {
                    da[src] = da[src] + gv;
                }
            }
        }
        Op::AvgPool { a, window, in_len } => conv::avg_pool_backward(nodes, grads, *a, *window, *in_len, g),
        Op::Softmax { a, n, k } => norm::softmax_backward(nodes, grads, *a, *n, *k, &node.value, g),
        Op::LayerNorm { a, n, inv_std } => {
            norm::layer_norm_backward(nodes, grads, *a, *n, inv_std, &node.value, g)
        }
        Op::BatchNorm(s) => norm::batch_norm_backward(nodes, grads, s, g),
        Op::Attention(s) => attention::attention_backward(nodes, grads, s, g),
        Op::Dropout { a, mask } => {
            if let Some(da) = grad_buf(nodes, grads, *a) {
                for ((d, &gv), &m) in da.iter_mut().zip(g).zip(mask) {
                    *d = *d + gv * m;
                }
            }
        }
        Op::Sum(a) => reduce::sum_backward(nodes, grads, *a, g[0]),
        Op::Mean(a) => {
            let n = T::of(nodes[a.0].value.len() as f64);
            reduce::sum_backward(nodes, grads, *a, g[0] / n)
        }
    }
}
