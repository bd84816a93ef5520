use std::fs;
use std::path::{Path, PathBuf};

use seastate_core::nets::{Architecture, AtNnConfig};
use seastate_core::seaway::DatasetConfig;
use seastate_core::training::{SplitSpec, TrainConfig};
use seastate_core::uncertainty::DEFAULT_PASSES;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a run depends on. Missing keys take the defaults of the best
/// AT-NN setup; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Thread count for dataset synthesis and MC passes; `None` uses all
    /// cores. Results do not depend on it.
    pub workers: Option<usize>,
    pub dataset: DatasetConfig,
    /// Tabulated RAO file; the built-in surrogate when absent.
    pub rao_table: Option<PathBuf>,
    pub architecture: Architecture,
    pub training: TrainConfig,
    pub split: SplitSpec,
    /// Per-channel RMS the motion signals are scaled to before training.
    pub input_rms: f64,
    /// When set, the output bias starts at the training-target mean and the
    /// output weights are multiplied by this factor. `null` keeps the plain
    /// Glorot/zero initialisation.
    pub output_init_scale: Option<f64>,
    pub mc_passes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: None,
            dataset: DatasetConfig::default(),
            rao_table: None,
            architecture: Architecture::AtNn(AtNnConfig::default()),
            training: TrainConfig::default(),
            split: SplitSpec::default(),
            input_rms: 1.0,
            output_init_scale: Some(0.1),
            mc_passes: DEFAULT_PASSES,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let checks = [
            self.dataset.signal.validate(),
            self.architecture.validate(),
            self.training.optimizer.validate(),
            self.split.validate(),
        ];
        for c in checks {
            c.map_err(|e| CliError::Config(e.to_string()))?;
        }
        if !(self.input_rms.is_finite() && self.input_rms > 0.0) {
            return Err(CliError::Config(format!("input_rms must be positive, got {}", self.input_rms)));
        }
        if let Some(s) = self.output_init_scale {
            if !(s.is_finite() && s >= 0.0) {
                return Err(CliError::Config(format!("output_init_scale must be nonnegative, got {s}")));
            }
        }
        let t = &self.training;
        if t.batch_size < 2 || t.max_epochs < 1 || t.patience < 1 {
            return Err(CliError::Config("batch_size must be at least 2; max_epochs and patience at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if self.mc_passes < 2 {
            return Err(CliError::Config(format!("mc_passes must be at least 2, got {}", self.mc_passes)));
        }
        Ok(())
    }
}
