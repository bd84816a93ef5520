//! Reverse-mode automatic differentiation over dense row-major arrays.
//!
//! A [`Tape`] records every operation as it executes. Values are computed
//! eagerly; [`Tape::backward`] then walks the record in reverse and
//! accumulates gradients into every input that asked for one.
//!
//! ```
//! use seastate_autodiff::Tape;
//!
//! let mut tape = Tape::<f64>::new();
//! let x = tape.param(&[2], vec![1.0, 2.0]).unwrap();
//! let sq = tape.mul(x, x).unwrap();
//! let loss = tape.sum(sq);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0]);
//! ```

mod attention;
mod conv;
mod elementwise;
mod error;
mod kernels;
mod linalg;
mod norm;
mod reduce;
mod scalar;
mod tape;

pub use conv::PoolKind;
pub use elementwise::BinaryOp;
pub use error::{Error, Result};
pub use norm::{BatchStats, Mode, RunningStats, BATCH_NORM_EPS, NORM_EPS};
pub use scalar::Scalar;
pub use tape::{Tape, Tensor};
