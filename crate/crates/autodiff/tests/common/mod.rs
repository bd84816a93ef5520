//! Central finite-difference oracle shared by the gradient tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seastate_autodiff::{Scalar, Tape, Tensor};

#[derive(Clone)]
pub struct Input {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Input {
    pub fn random(shape: &[usize], seed: u64) -> Self {
        let n = shape.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { shape: shape.to_vec(), values: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() }
    }

    pub fn new(shape: &[usize], values: Vec<f64>) -> Self {
        Self { shape: shape.to_vec(), values }
    }
}

/// Scalar loss: a fixed random projection of the op output, so every
/// output element contributes with a distinct weight.
fn project<T: Scalar>(tape: &mut Tape<T>, out: Tensor) -> Tensor {
    let n = tape.numel(out);
    let mut rng = ChaCha8Rng::seed_from_u64(0xfeed);
    let w: Vec<T> = (0..n).map(|_| T::of(rng.random_range(-1.0..1.0))).collect();
    let shape = tape.shape(out).to_vec();
    let w = tape.constant(&shape, w).unwrap();
    let prod = tape.mul(out, w).unwrap();
    tape.sum(prod)
}

fn loss<T: Scalar>(inputs: &[Vec<T>], shapes: &[Vec<usize>], build: &dyn Fn(&mut Tape<T>, &[Tensor]) -> Tensor) -> (Tape<T>, Vec<Tensor>, Tensor) {
    let mut tape = Tape::new();
    let leaves: Vec<Tensor> = inputs
        .iter()
        .zip(shapes)
        .map(|(v, s)| tape.param(s, v.clone()).unwrap())
        .collect();
    let out = build(&mut tape, &leaves);
    let l = project(&mut tape, out);
    (tape, leaves, l)
}

/// Largest elementwise relative error between analytic and central
/// difference gradients over every input element.
pub fn max_rel_error<T: Scalar>(inputs: &[Input], h: f64, build: &dyn Fn(&mut Tape<T>, &[Tensor]) -> Tensor) -> f64 {
    let shapes: Vec<Vec<usize>> = inputs.iter().map(|i| i.shape.clone()).collect();
    let base: Vec<Vec<T>> = inputs.iter().map(|i| i.values.iter().map(|&v| T::of(v)).collect()).collect();
    let (mut tape, leaves, l) = loss(&base, &shapes, build);
    tape.backward(l).unwrap();
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|&t| match tape.grad(t) {
            Some(g) => g.iter().map(|v| v.as_f64()).collect(),
            None => vec![0.0; tape.numel(t)],
        })
        .collect();
    let eval = |vals: &[Vec<T>]| -> f64 {
        let (tape, _, l) = loss(vals, &shapes, build);
        tape.value(l)[0].as_f64()
    };
    let mut worst: f64 = 0.0;
    for (i, input) in base.iter().enumerate() {
        for j in 0..input.len() {
            let mut plus = base.clone();
            plus[i][j] = plus[i][j] + T::of(h);
            let mut minus = base.clone();
            minus[i][j] = minus[i][j] - T::of(h);
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic[i][j];
            let denom = a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}
