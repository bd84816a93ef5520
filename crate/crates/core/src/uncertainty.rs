//! Monte-Carlo-dropout predictive spread and σ-scaled coverage.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use seastate_autodiff::Tape;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::nets::{ForwardMode, Model};
use crate::seaway::derive_seed;
use crate::training::Examples;

pub const DEFAULT_PASSES: usize = 256;

/// Interval half-widths, in σ, at which coverage is reported.
pub const COVERAGE_LEVELS: [u32; 5] = [1, 2, 3, 4, 5];

const FEATURE_BATCH: usize = 64;

/// Predictive summary for one input, in scaled target space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    /// Output with dropout off.
    pub deterministic_pred: [f64; 3],
    pub mu: [f64; 3],
    /// Population standard deviation over the passes.
    pub sigma: [f64; 3],
    pub n_passes: usize,
}

/// Fraction of truths inside `μ ± n·σ`, per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub levels: Vec<u32>,
    /// All three parameters inside their intervals at once.
    pub joint: Vec<f64>,
    /// Indexed `[hs, tz, beta][level]`.
    pub per_parameter: [Vec<f64>; 3],
}

/// MC-dropout reports for every example.
///
/// The trunk up to the first dropout layer is evaluated once. Each pass
/// then re-runs the head over all examples with dropout active and batch
/// norm on running statistics; pass `k` draws its masks from
/// `derive_seed(seed, k)`, so results do not depend on `workers`.
pub fn mc_dropout(
    model: &Model<f32>,
    ex: &Examples,
    n_passes: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<Vec<UncertaintyReport>> {
    if n_passes < 2 {
        return arg(format!("MC dropout needs at least 2 passes, got {n_passes}"));
    }
    if ex.is_empty() {
        return arg("MC dropout needs at least one example");
    }
    if ex.len != model.signal_len() {
        return arg(format!(
            "examples hold {} samples per channel but the model expects {}",
            ex.len,
            model.signal_len()
        ));
    }
    let (features, width) = trunk_features(model, ex)?;
    let n = ex.n();
    let head = |mode: ForwardMode, pass_seed: u64| -> Result<Vec<f32>> {
        let mut tape = Tape::new();
        let bound = model.bind_head(&mut tape)?;
        let f = tape.constant(&[n, width], features.clone())?;
        let mut rng = ChaCha8Rng::seed_from_u64(pass_seed);
        let out = model.head(&mut tape, &bound, f, mode, &mut rng)?;
        Ok(tape.value(out.output).to_vec())
    };
    let deterministic = head(ForwardMode::Infer, seed)?;
    let passes = || -> Result<Vec<Vec<f32>>> {
        (0..n_passes)
            .into_par_iter()
            .map(|k| head(ForwardMode::McDropout, derive_seed(seed, k as u64)))
            .collect()
    };
    let passes = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Argument(format!("cannot start {w} workers: {e}")))?
            .install(passes)?,
        None => passes()?,
    };

    let mut reports = Vec::with_capacity(n);
    for i in 0..n {
        let mut mean = [0.0f64; 3];
        let mut m2 = [0.0f64; 3];
        for (k, p) in passes.iter().enumerate() {
            for d in 0..3 {
                let x = f64::from(p[3 * i + d]);
                let delta = x - mean[d];
                mean[d] += delta / (k + 1) as f64;
                m2[d] += delta * (x - mean[d]);
            }
        }
        let det = &deterministic[3 * i..3 * i + 3];
        reports.push(UncertaintyReport {
            deterministic_pred: [det[0].into(), det[1].into(), det[2].into()],
            mu: mean,
            sigma: m2.map(|v| (v / n_passes as f64).sqrt()),
            n_passes,
        });
    }
    Ok(reports)
}

/// MC-dropout report for a single `[3, signal_len]` input.
pub fn mc_dropout_predict(model: &Model<f32>, input: &[f32], n_passes: usize, seed: u64) -> Result<UncertaintyReport> {
    if input.len() != 3 * model.signal_len() {
        return arg(format!(
            "expected 3×{} input values, got {}",
            model.signal_len(),
            input.len()
        ));
    }
    let ex = Examples { len: model.signal_len(), inputs: input.to_vec(), targets: vec![0.0; 3] };
    Ok(mc_dropout(model, &ex, n_passes, seed, Some(1))?.remove(0))
}

fn trunk_features(model: &Model<f32>, ex: &Examples) -> Result<(Vec<f32>, usize)> {
    let mut out = Vec::new();
    let mut width = 0;
    let idx: Vec<usize> = (0..ex.n()).collect();
    for chunk in idx.chunks(FEATURE_BATCH) {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false)?;
        let (x, _) = ex.gather(chunk);
        let x = model.input(&mut tape, x, chunk.len())?;
        let f = model.features(&mut tape, &bound, x)?;
        width = tape.shape(f)[1];
        out.extend_from_slice(tape.value(f));
    }
    Ok((out, width))
}

/// Coverage of `truths` by `μ ± n·σ` for every `n` in `levels`. Bounds are
/// inclusive, so an exact prediction with σ = 0 is covered.
pub fn coverage_stats(reports: &[UncertaintyReport], truths: &[[f64; 3]], levels: &[u32]) -> Result<Coverage> {
    if reports.len() != truths.len() {
        return arg(format!("{} reports but {} truths", reports.len(), truths.len()));
    }
    if reports.is_empty() {
        return arg("coverage of an empty set is undefined");
    }
    let total = reports.len() as f64;
    let mut joint = Vec::with_capacity(levels.len());
    let mut per_parameter: [Vec<f64>; 3] = Default::default();
    for &n in levels {
        let mut inside = [0usize; 3];
        let mut all = 0usize;
        for (r, t) in reports.iter().zip(truths) {
            let hit: [bool; 3] = std::array::from_fn(|d| (t[d] - r.mu[d]).abs() <= f64::from(n) * r.sigma[d]);
            for d in 0..3 {
                inside[d] += usize::from(hit[d]);
            }
            all += usize::from(hit.iter().all(|&h| h));
        }
        joint.push(all as f64 / total);
        for d in 0..3 {
            per_parameter[d].push(inside[d] as f64 / total);
        }
    }
    Ok(Coverage { levels: levels.to_vec(), joint, per_parameter })
}

/// One row per sample and parameter: truth, dropout-off prediction, μ, σ.
pub fn reports_csv(reports: &[UncertaintyReport], truths: &[[f64; 3]]) -> String {
    let mut s = String::from("sample,parameter,truth,deterministic,mu,sigma\n");
    for (i, (r, t)) in reports.iter().zip(truths).enumerate() {
        for (d, name) in ["hs", "tz", "beta"].iter().enumerate() {
            let _ = writeln!(s, "{i},{name},{},{},{},{}", t[d], r.deterministic_pred[d], r.mu[d], r.sigma[d]);
        }
    }
    s
}
