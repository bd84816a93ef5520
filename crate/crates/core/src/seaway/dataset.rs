use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rao::TransferFunction;
use super::sampling::{lhs_sample, steepness_ok};
use super::synth::{synthesize_motions, MotionRecord, SeaState, SignalParams};
use super::DEFAULT_SPEED_MPS;
use crate::error::{Error, Result};

/// Stream index reserved for the Latin-hypercube draw.
const LHS_STREAM: u64 = u64::MAX;

/// Independent child seed for `stream` under `master` (SplitMix64 mix), so
/// records can be synthesized in any order or on any worker.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Latin-hypercube size before the steepness filter.
    pub n_samples: usize,
    pub speed_mps: f64,
    pub signal: SignalParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { n_samples: 20_000, speed_mps: DEFAULT_SPEED_MPS, signal: SignalParams::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub requested: usize,
    pub retained: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<MotionRecord>,
    pub summary: DatasetSummary,
}

/// Sample, filter and synthesize a labelled dataset. Record `i` of the
/// hypercube is always seeded from `(seed, i)`, so the result does not
/// depend on `workers`.
pub fn generate_dataset(
    cfg: &DatasetConfig,
    tf: &dyn TransferFunction,
    seed: u64,
    workers: Option<usize>,
) -> Result<Dataset> {
    cfg.signal.validate()?;
    let states = lhs_sample(cfg.n_samples, &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, LHS_STREAM)))?;
    let kept: Vec<(usize, SeaState)> = states.into_iter().enumerate().filter(|(_, s)| steepness_ok(s)).collect();
    if kept.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "none of the {} sampled sea states passed the steepness filter",
            cfg.n_samples
        )));
    }
    let synth = || -> Result<Vec<MotionRecord>> {
        kept.par_iter()
            .map(|(i, s)| synthesize_motions(s, cfg.speed_mps, tf, &cfg.signal, derive_seed(seed, *i as u64)))
            .collect()
    };
    let records = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Argument(format!("cannot start {n} workers: {e}")))?
            .install(synth)?,
        None => synth()?,
    };
    let summary = DatasetSummary { requested: cfg.n_samples, retained: records.len() };
    Ok(Dataset { records, summary })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    hs: f64,
    tz: f64,
    beta: f64,
    speed_mps: f64,
    sample_rate_hz: f64,
    seed: u64,
    heave: Vec<f64>,
    pitch: Vec<f64>,
    roll: Vec<f64>,
}

/// One JSON object per line.
pub fn write_dataset(path: &Path, records: &[MotionRecord]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        let [heave, pitch, roll] = r.channels.clone();
        let line = Line {
            hs: r.label.hs,
            tz: r.label.tz,
            beta: r.label.beta,
            speed_mps: r.speed,
            sample_rate_hz: r.sample_rate,
            seed: r.seed,
            heave,
            pitch,
            roll,
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::Data(e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_dataset(path: &Path) -> Result<Vec<MotionRecord>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Data(format!("{}:{}: {msg}", path.display(), n + 1));
        let l: Line = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let label = SeaState { hs: l.hs, tz: l.tz, beta: l.beta };
        label.validate().map_err(|e| bad(e.to_string()))?;
        if l.heave.len() != l.pitch.len() || l.heave.len() != l.roll.len() || l.heave.is_empty() {
            return Err(bad("channels differ in length".into()));
        }
        out.push(MotionRecord {
            channels: [l.heave, l.pitch, l.roll],
            sample_rate: l.sample_rate_hz,
            label,
            speed: l.speed_mps,
            seed: l.seed,
        });
    }
    Ok(out)
}
