use serde::{Deserialize, Serialize};

use super::data::{Examples, TARGET_SCALE};
use crate::error::{arg, Result};
use crate::nets::Model;

/// Per-parameter errors in scaled space, plus their averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metrics {
    pub mse_hs: f64,
    pub mse_tz: f64,
    pub mse_beta: f64,
    pub mae_hs: f64,
    pub mae_tz: f64,
    pub mae_beta: f64,
    pub mse_avg: f64,
    pub mae_avg: f64,
}

impl Metrics {
    pub fn from_predictions(pred: &[[f64; 3]], truth: &[[f64; 3]]) -> Result<Self> {
        if pred.len() != truth.len() || pred.is_empty() {
            return arg(format!("cannot score {} predictions against {} targets", pred.len(), truth.len()));
        }
        let n = pred.len() as f64;
        let mut mse = [0.0; 3];
        let mut mae = [0.0; 3];
        for (p, t) in pred.iter().zip(truth) {
            for d in 0..3 {
                let e = p[d] - t[d];
                mse[d] += e * e / n;
                mae[d] += e.abs() / n;
            }
        }
        Ok(Self {
            mse_hs: mse[0],
            mse_tz: mse[1],
            mse_beta: mse[2],
            mae_hs: mae[0],
            mae_tz: mae[1],
            mae_beta: mae[2],
            mse_avg: mse.iter().sum::<f64>() / 3.0,
            mae_avg: mae.iter().sum::<f64>() / 3.0,
        })
    }

    pub fn mse(&self) -> [f64; 3] {
        [self.mse_hs, self.mse_tz, self.mse_beta]
    }

    pub fn mae(&self) -> [f64; 3] {
        [self.mae_hs, self.mae_tz, self.mae_beta]
    }

    /// MAE in metres, seconds and degrees.
    pub fn physical_mae(&self) -> [f64; 3] {
        let m = self.mae();
        [m[0] * TARGET_SCALE[0], m[1] * TARGET_SCALE[1], m[2] * TARGET_SCALE[2]]
    }
}

const EVAL_BATCH: usize = 64;

/// Infer-mode predictions for every example.
pub fn predict_all(model: &Model<f32>, ex: &Examples) -> Result<Vec<[f64; 3]>> {
    let mut out = Vec::with_capacity(ex.n());
    let idx: Vec<usize> = (0..ex.n()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let (x, _) = ex.gather(chunk);
        let y = model.predict(x, chunk.len())?;
        out.extend(y.chunks_exact(3).map(|r| [r[0] as f64, r[1] as f64, r[2] as f64]));
    }
    Ok(out)
}

pub fn targets(ex: &Examples) -> Vec<[f64; 3]> {
    (0..ex.n()).map(|i| ex.target(i).map(f64::from)).collect()
}

pub fn evaluate(model: &Model<f32>, ex: &Examples) -> Result<Metrics> {
    if ex.is_empty() {
        return arg("cannot evaluate on an empty split");
    }
    Metrics::from_predictions(&predict_all(model, ex)?, &targets(ex))
}

/// Scores of the predictor that always outputs `mean`.
pub fn constant_predictor(mean: [f64; 3], ex: &Examples) -> Result<Metrics> {
    Metrics::from_predictions(&vec![mean; ex.n()], &targets(ex))
}

pub fn target_mean(ex: &Examples) -> [f64; 3] {
    let t = targets(ex);
    let n = t.len().max(1) as f64;
    let mut m = [0.0; 3];
    for r in &t {
        for d in 0..3 {
            m[d] += r[d] / n;
        }
    }
    m
}
