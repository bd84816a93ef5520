//! Target scaling, slice-shuffling augmentation, optimizers, the training
//! loop and evaluation metrics.

mod augment;
mod data;
mod metrics;
mod optim;
mod trainer;

pub use augment::{augment_batch, crop, AugmentationKind, AugmentationMode, Augmented};
pub use data::{inverse_scale, scale_targets, Examples, InputScaling, Split, SplitSpec, TARGET_SCALE};
pub use metrics::{constant_predictor, evaluate, predict_all, target_mean, targets, Metrics};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use trainer::{mse_loss, split_mse, train, EpochLog, StopReason, TrainConfig, TrainLog};
