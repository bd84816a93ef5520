use crate::tape::{grad_buf, Node, Op, Tape, Tensor};
use crate::Scalar;

impl<T: Scalar> Tape<T> {
    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Tensor) -> Tensor {
        let s = self.value(a).iter().fold(T::zero(), |acc, &v| acc + v);
        self.push(vec![], vec![s], Op::Sum(a))
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&mut self, a: Tensor) -> Tensor {
        let n = T::of(self.numel(a).max(1) as f64);
        let s = self.value(a).iter().fold(T::zero(), |acc, &v| acc + v) / n;
        self.push(vec![], vec![s], Op::Mean(a))
    }
}

pub(crate) fn sum_backward<T: Scalar>(nodes: &[Node<T>], grads: &mut [Option<Vec<T>>], a: Tensor, g: T) {
    if let Some(da) = grad_buf(nodes, grads, a) {
        for d in da.iter_mut() {
            *d = *d + g;
        }
    }
}
