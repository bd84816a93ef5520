//! Sea-state estimation from ship motions: synthetic data generation,
//! network architectures, training and Monte-Carlo-dropout uncertainty.

pub mod error;
pub mod nets;
pub mod seaway;
pub mod training;
pub mod uncertainty;

pub use error::{Error, Result};
