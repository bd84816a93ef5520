use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seastate_autodiff::{RunningStats, Scalar, Tape, Tensor};
use serde::{Deserialize, Serialize};

use super::augment::{augment_batch, crop, AugmentationKind, AugmentationMode};
use super::data::Examples;
use super::optim::{Optimizer, OptimizerConfig};
use crate::error::{arg, Error, Result};
use crate::nets::{ForwardMode, Model, Param};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub augmentation: AugmentationMode,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            augmentation: AugmentationMode::default(),
            batch_size: 32,
            max_epochs: 250,
            patience: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub stop_reason: StopReason,
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn best_val_mse(&self) -> f64 {
        self.epochs[self.best_epoch - 1].val_mse
    }

    /// `epoch,train_mse,val_mse,seconds` with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_mse,val_mse,seconds\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{},{},{:.3}", e.epoch, e.train_mse, e.val_mse, e.seconds);
        }
        s
    }
}

/// Mean squared error over every entry of two equally shaped tensors.
pub fn mse_loss<T: Scalar>(tape: &mut Tape<T>, pred: Tensor, target: Tensor) -> Result<Tensor> {
    if tape.shape(pred) != tape.shape(target) {
        return Err(Error::Tensor(seastate_autodiff::Error::Shape(format!(
            "prediction {:?} and target {:?} differ",
            tape.shape(pred),
            tape.shape(target)
        ))));
    }
    let d = tape.sub(pred, target)?;
    let sq = tape.mul(d, d)?;
    Ok(tape.mean(sq))
}

/// Infer-mode MSE over a whole split.
pub fn split_mse(model: &Model<f32>, ex: &Examples) -> Result<f64> {
    let m = super::metrics::evaluate(model, ex)?;
    Ok(m.mse_avg)
}

struct Snapshot {
    params: Vec<Param<f32>>,
    running: Vec<RunningStats<f32>>,
}

/// Mini-batch training with early stopping on validation MSE. On return the
/// model holds the parameters of the best validation epoch.
///
/// Every source of randomness (batch order, augmentation, dropout) comes
/// from one generator seeded with `seed`.
pub fn train(model: &mut Model<f32>, train: &Examples, val: &Examples, cfg: &TrainConfig, seed: u64) -> Result<TrainLog> {
    if train.is_empty() || val.is_empty() {
        return arg("training needs non-empty train and validation splits");
    }
    if cfg.batch_size < 2 || cfg.max_epochs < 1 || cfg.patience < 1 {
        return arg("batch size must be at least 2; epochs and patience at least 1");
    }
    let len = model.signal_len();
    if train.len != len || val.len != len {
        return arg(format!("examples hold {}-sample signals, the model expects {len}", train.len));
    }
    if cfg.augmentation.kind != AugmentationKind::None {
        cfg.augmentation.slices_for(len)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = Optimizer::new(cfg.optimizer)?;
    let mut order: Vec<usize> = (0..train.n()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, Snapshot)> = None;
    let mut since_best = 0;
    let mut stop_reason = StopReason::MaxEpochs;
    let start = Instant::now();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            // batch norm needs two samples
            if idx.len() < 2 {
                continue;
            }
            let b = idx.len();
            let (mut x, y) = train.gather(idx);
            if cfg.augmentation.kind != AugmentationKind::None {
                let a = augment_batch(&x, b, len, &cfg.augmentation, &mut rng)?;
                x = crop(&a.data, b, a.padded_len, len);
            }
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, true)?;
            let xt = model.input(&mut tape, x, b)?;
            let out = model.forward(&mut tape, &bound, xt, ForwardMode::Train, &mut rng)?;
            let yt = tape.constant(&[b, 3], y)?;
            let loss = mse_loss(&mut tape, out.output, yt)?;
            let lv = tape.value(loss)[0] as f64;
            if !lv.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            tape.backward(loss)?;
            let grads: Vec<Vec<f32>> = bound
                .iter()
                .zip(model.params())
                .map(|(&t, p)| tape.grad(t).map_or_else(|| vec![0.0; p.value.len()], <[f32]>::to_vec))
                .collect();
            drop(tape);
            opt.step(model.params_mut(), &grads)?;
            model.apply_batch_stats(&out.batch_stats);
            loss_sum += lv * b as f64;
            seen += b;
        }
        let train_mse = loss_sum / seen.max(1) as f64;
        let val_mse = split_mse(model, val)?;
        if !val_mse.is_finite() || model.params().iter().any(|p| p.value.iter().any(|v| !v.is_finite())) {
            return Err(Error::Divergence { epoch });
        }
        epochs.push(EpochLog { epoch, train_mse, val_mse, seconds: start.elapsed().as_secs_f64() });
        if best.as_ref().is_none_or(|(_, v, _)| val_mse < *v) {
            let snap = Snapshot { params: model.params().to_vec(), running: model.running_stats().to_vec() };
            best = Some((epoch, val_mse, snap));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stop_reason = StopReason::EarlyStop;
                break;
            }
        }
    }
    let (best_epoch, _, snap) = best.expect("at least one epoch ran");
    *model = Model::from_parts(model.arch().clone(), snap.params, snap.running)?;
    Ok(TrainLog { epochs, stop_reason, best_epoch })
}
