//! Synthetic ship-motion records from parametric, long-crested sea states.
//!
//! The pipeline: Latin-hypercube sample `(Hs, Tz, β)`, drop states that
//! exceed the breaking-steepness limit, realise a random-phase
//! Bretschneider sea on a jittered frequency grid, shift every component to
//! its encounter frequency and sum the heave, pitch and roll responses.

mod dataset;
mod rao;
mod sampling;
mod spectrum;
mod synth;

pub use dataset::{
    derive_seed, generate_dataset, read_dataset, write_dataset, Dataset, DatasetConfig, DatasetSummary,
};
pub use rao::{rao_lookup, surrogate_rao, ConstantRao, Dof, RaoTable, SurrogateRao, TransferFunction};
pub use sampling::{lhs_sample, steepness, steepness_limit, steepness_ok, BETA_RANGE, HS_RANGE, TZ_RANGE};
pub use spectrum::{bretschneider_density, component_amplitudes, spectrum_m0, FrequencyGrid};
pub use synth::{encounter_frequency, synthesize_motions, MotionRecord, SeaState, SignalParams, WaveComponents};

/// Gravitational acceleration, m/s².
pub const GRAVITY: f64 = 9.81;

/// 16.19 kn in m/s.
pub const DEFAULT_SPEED_MPS: f64 = 8.3295;
