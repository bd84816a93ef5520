use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::seaway::{MotionRecord, SeaState};

/// Divisors applied to (Hs, Tz, β) so targets fall in [0, 1].
pub const TARGET_SCALE: [f64; 3] = [15.0, 15.0, 360.0];

pub fn scale_targets(state: &SeaState) -> [f64; 3] {
    [state.hs / TARGET_SCALE[0], state.tz / TARGET_SCALE[1], state.beta / TARGET_SCALE[2]]
}

pub fn inverse_scale(scaled: [f64; 3]) -> SeaState {
    SeaState { hs: scaled[0] * TARGET_SCALE[0], tz: scaled[1] * TARGET_SCALE[1], beta: scaled[2] * TARGET_SCALE[2] }
}

/// Fixed per-channel gain applied to the motion signals before they enter
/// a network. Stored with the run so predictions see the same scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputScaling {
    pub gain: [f64; 3],
}

impl Default for InputScaling {
    fn default() -> Self {
        Self { gain: [1.0; 3] }
    }
}

impl InputScaling {
    /// `target / rms` per channel over `records`; zero-energy channels keep
    /// unit gain.
    pub fn fit(records: &[&MotionRecord], target: f64) -> Self {
        let mut gain = [1.0; 3];
        for (d, g) in gain.iter_mut().enumerate() {
            let (mut ss, mut n) = (0.0, 0usize);
            for r in records {
                ss += r.channels[d].iter().map(|v| v * v).sum::<f64>();
                n += r.channels[d].len();
            }
            let rms = (ss / n.max(1) as f64).sqrt();
            if rms > 0.0 {
                *g = target / rms;
            }
        }
        Self { gain }
    }
}

/// Labelled examples in network layout: inputs `[n, 3, len]` as `f32`,
/// scaled targets `[n, 3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Examples {
    pub len: usize,
    pub inputs: Vec<f32>,
    pub targets: Vec<f32>,
}

impl Examples {
    /// Records must all have `len` samples.
    pub fn from_records(records: &[&MotionRecord], len: usize, scaling: &InputScaling) -> Result<Self> {
        let mut inputs = Vec::with_capacity(records.len() * 3 * len);
        let mut targets = Vec::with_capacity(records.len() * 3);
        for r in records {
            if r.n_samples() != len {
                return arg(format!("record has {} samples, the model expects {len}", r.n_samples()));
            }
            for (ch, g) in r.channels.iter().zip(scaling.gain) {
                inputs.extend(ch.iter().map(|&v| (v * g) as f32));
            }
            targets.extend(scale_targets(&r.label).map(|v| v as f32));
        }
        Ok(Self { len, inputs, targets })
    }

    pub fn n(&self) -> usize {
        self.targets.len() / 3
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f32] {
        &self.inputs[i * 3 * self.len..(i + 1) * 3 * self.len]
    }

    pub fn target(&self, i: usize) -> [f32; 3] {
        [self.targets[3 * i], self.targets[3 * i + 1], self.targets[3 * i + 2]]
    }

    /// Gather rows `idx` into contiguous input and target buffers.
    pub fn gather(&self, idx: &[usize]) -> (Vec<f32>, Vec<f32>) {
        let mut x = Vec::with_capacity(idx.len() * 3 * self.len);
        let mut y = Vec::with_capacity(idx.len() * 3);
        for &i in idx {
            x.extend_from_slice(self.input(i));
            y.extend_from_slice(&self.target(i));
        }
        (x, y)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let (inputs, targets) = self.gather(idx);
        Self { len: self.len, inputs, targets }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train: 0.7, val: 0.15, test: 0.15 }
    }
}

/// Disjoint index sets covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|&v| !(v > 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return arg(format!("split fractions must be positive and sum to 1, got {f:?}"));
        }
        Ok(())
    }

    /// Shuffle `0..n` and cut it by the fractions; test takes the remainder.
    pub fn split(&self, n: usize, seed: u64) -> Result<Split> {
        self.validate()?;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (self.train * n as f64).round() as usize;
        let n_val = ((self.val * n as f64).round() as usize).min(n - n_train);
        let test = idx.split_off(n_train + n_val);
        let val = idx.split_off(n_train);
        Ok(Split { train: idx, val, test })
    }
}
