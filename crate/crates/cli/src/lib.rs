//! Reproducible command-line runs: every command writes into one output
//! directory and echoes the effective configuration there.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use seastate_core::nets::{load_checkpoint, save_checkpoint, Model};
use seastate_core::seaway::{
    derive_seed, generate_dataset, read_dataset, write_dataset, MotionRecord, RaoTable, SurrogateRao, TransferFunction,
};
use seastate_core::training::{
    evaluate, inverse_scale, predict_all, target_mean, targets, train, Examples, InputScaling, Split,
};
use seastate_core::uncertainty::{coverage_stats, mc_dropout, reports_csv, Coverage, UncertaintyReport, COVERAGE_LEVELS};
use serde::Serialize;
use thiserror::Error;

pub use config::RunConfig;

/// Seed stream for weight initialisation, kept apart from the split and
/// training streams.
const INIT_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;
const TRAIN_STREAM: u64 = 3;

pub const SCALING_FILE: &str = "input_scaling.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged at epoch {0}")]
    Divergence(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }
}

impl From<seastate_core::Error> for CliError {
    fn from(e: seastate_core::Error) -> Self {
        use seastate_core::Error as E;
        match e {
            E::Argument(_) | E::Domain(_) => CliError::Config(e.to_string()),
            E::Divergence { epoch } => CliError::Divergence(epoch),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "seastate", version, about = "Sea-state estimation from synthetic ship motions")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured worker count.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the surrogate RAO on the 36-heading grid.
    GenRao,
    /// Sample, filter and synthesize a labelled dataset.
    GenDataset,
    /// Train a network and keep the best-validation checkpoint.
    Train {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Scaled-space metrics of a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
    },
    /// Physical-unit predictions for dataset lines.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Zero-based line; every line when omitted.
        #[arg(long)]
        line: Option<usize>,
    },
    /// MC-dropout spread and coverage on one split.
    Uncertainty {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
        /// Overrides the configured pass count.
        #[arg(long)]
        passes: Option<usize>,
    },
}

/// Load the configuration, apply flag overrides and run `command`.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.global.seed {
        cfg.seed = s;
    }
    if cli.global.workers.is_some() {
        cfg.workers = cli.global.workers;
    }
    cfg.validate()?;
    let out = &cli.global.out;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write_json(&out.join("config.json"), &cfg)?;
    let explicit_kind = cli.global.config.as_ref().map(|_| cfg.architecture.kind());
    match &cli.command {
        Command::GenRao => gen_rao(out),
        Command::GenDataset => gen_dataset(&cfg, out),
        Command::Train { dataset } => cmd_train(&cfg, dataset, out),
        Command::Eval { checkpoint, dataset, split } => cmd_eval(&cfg, checkpoint, dataset, *split, explicit_kind, out),
        Command::Predict { checkpoint, dataset, line } => cmd_predict(checkpoint, dataset, *line, explicit_kind, out),
        Command::Uncertainty { checkpoint, dataset, split, passes } => {
            let passes = passes.unwrap_or(cfg.mc_passes);
            cmd_uncertainty(&cfg, checkpoint, dataset, *split, passes, explicit_kind, out)
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn gen_rao(out: &Path) -> Result<(), CliError> {
    let path = out.join("rao.json");
    RaoTable::surrogate().save(&path)?;
    println!("{}", path.display());
    Ok(())
}

fn transfer_function(cfg: &RunConfig) -> Result<Box<dyn TransferFunction>, CliError> {
    Ok(match &cfg.rao_table {
        Some(p) => Box::new(RaoTable::load(p)?),
        None => Box::new(SurrogateRao),
    })
}

#[derive(Serialize)]
struct GenSummary {
    requested: usize,
    retained: usize,
    seed: u64,
}

fn gen_dataset(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let tf = transfer_function(cfg)?;
    let ds = generate_dataset(&cfg.dataset, tf.as_ref(), cfg.seed, cfg.workers)?;
    write_dataset(&out.join("dataset.jsonl"), &ds.records)?;
    let summary = GenSummary { requested: ds.summary.requested, retained: ds.summary.retained, seed: cfg.seed };
    write_json(&out.join("summary.json"), &summary)?;
    println!("retained {} of {} sea states", summary.retained, summary.requested);
    Ok(())
}

fn load_records(path: &Path) -> Result<Vec<MotionRecord>, CliError> {
    let records = read_dataset(path)?;
    if records.is_empty() {
        return Err(CliError::Data(format!("{} holds no records", path.display())));
    }
    Ok(records)
}

fn split_of(cfg: &RunConfig, n: usize) -> Result<Split, CliError> {
    Ok(cfg.split.split(n, derive_seed(cfg.seed, SPLIT_STREAM))?)
}

fn pick<'a>(records: &'a [MotionRecord], idx: &[usize]) -> Vec<&'a MotionRecord> {
    idx.iter().map(|&i| &records[i]).collect()
}

fn cmd_train(cfg: &RunConfig, dataset: &Path, out: &Path) -> Result<(), CliError> {
    let records = load_records(dataset)?;
    let split = split_of(cfg, records.len())?;
    let len = cfg.architecture.signal_len();
    let scaling = InputScaling::fit(&pick(&records, &split.train), cfg.input_rms);
    let examples = |idx: &[usize]| Examples::from_records(&pick(&records, idx), len, &scaling);
    let (trn, val, tst) = (examples(&split.train)?, examples(&split.val)?, examples(&split.test)?);

    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(derive_seed(cfg.seed, INIT_STREAM));
    let mut model = Model::<f32>::build(cfg.architecture.clone(), &mut rng)?;
    if let Some(scale) = cfg.output_init_scale {
        model.init_output(target_mean(&trn), scale)?;
    }
    let result = train(&mut model, &trn, &val, &cfg.training, derive_seed(cfg.seed, TRAIN_STREAM));
    let log = result?;
    write_text(&out.join("train_log.csv"), &log.to_csv())?;
    save_checkpoint(&model, &out.join("checkpoint.bin"))?;
    write_json(&out.join(SCALING_FILE), &scaling)?;
    if !tst.is_empty() {
        let m = evaluate(&model, &tst)?;
        write_json(&out.join("metrics.json"), &m)?;
        write_json(&out.join("physical_mae.json"), &PhysicalMae::from(m.physical_mae()))?;
    }
    println!(
        "{} epochs, best epoch {}, validation MSE {:.6}, stop: {:?}",
        log.epochs.len(),
        log.best_epoch,
        log.best_val_mse(),
        log.stop_reason
    );
    Ok(())
}

#[derive(Serialize)]
struct PhysicalMae {
    hs_m: f64,
    tz_s: f64,
    beta_deg: f64,
}

impl From<[f64; 3]> for PhysicalMae {
    fn from(v: [f64; 3]) -> Self {
        Self { hs_m: v[0], tz_s: v[1], beta_deg: v[2] }
    }
}

/// Checkpoint plus the input scaling stored next to it.
fn load_model(checkpoint: &Path, kind: Option<&str>) -> Result<(Model<f32>, InputScaling), CliError> {
    let model = load_checkpoint::<f32>(checkpoint, kind)?;
    let path = checkpoint.parent().unwrap_or(Path::new(".")).join(SCALING_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let scaling = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok((model, scaling))
}

fn split_examples(
    cfg: &RunConfig,
    records: &[MotionRecord],
    which: SplitName,
    model: &Model<f32>,
    scaling: &InputScaling,
) -> Result<Examples, CliError> {
    let split = split_of(cfg, records.len())?;
    let all: Vec<usize>;
    let idx: &[usize] = match which {
        SplitName::Train => &split.train,
        SplitName::Val => &split.val,
        SplitName::Test => &split.test,
        SplitName::All => {
            all = (0..records.len()).collect();
            &all
        }
    };
    if idx.is_empty() {
        return Err(CliError::Data(format!("the {which:?} split is empty")));
    }
    Ok(Examples::from_records(&pick(records, idx), model.signal_len(), scaling)?)
}

fn cmd_eval(
    cfg: &RunConfig,
    checkpoint: &Path,
    dataset: &Path,
    split: SplitName,
    kind: Option<&str>,
    out: &Path,
) -> Result<(), CliError> {
    let (model, scaling) = load_model(checkpoint, kind)?;
    let records = load_records(dataset)?;
    let ex = split_examples(cfg, &records, split, &model, &scaling)?;
    let m = evaluate(&model, &ex)?;
    write_json(&out.join("metrics.json"), &m)?;
    write_json(&out.join("physical_mae.json"), &PhysicalMae::from(m.physical_mae()))?;
    println!("{}", serde_json::to_string(&m).map_err(|e| CliError::Data(e.to_string()))?);
    Ok(())
}

#[derive(Serialize)]
struct Prediction {
    line: usize,
    hs: f64,
    tz: f64,
    beta: f64,
}

fn cmd_predict(
    checkpoint: &Path,
    dataset: &Path,
    line: Option<usize>,
    kind: Option<&str>,
    out: &Path,
) -> Result<(), CliError> {
    let (model, scaling) = load_model(checkpoint, kind)?;
    let records = load_records(dataset)?;
    let lines: Vec<usize> = match line {
        Some(l) if l < records.len() => vec![l],
        Some(l) => return Err(CliError::Data(format!("line {l} is past the end of a {}-line dataset", records.len()))),
        None => (0..records.len()).collect(),
    };
    let ex = Examples::from_records(&pick(&records, &lines), model.signal_len(), &scaling)?;
    let mut text = String::new();
    for (&l, p) in lines.iter().zip(predict_all(&model, &ex)?) {
        let s = inverse_scale(p);
        let row = Prediction { line: l, hs: s.hs, tz: s.tz, beta: s.beta };
        let json = serde_json::to_string(&row).map_err(|e| CliError::Data(e.to_string()))?;
        println!("{json}");
        text.push_str(&json);
        text.push('\n');
    }
    write_text(&out.join("predictions.jsonl"), &text)
}

#[derive(Serialize)]
struct UncertaintyFile<'a> {
    split: SplitName,
    n_samples: usize,
    n_passes: usize,
    seed: u64,
    coverage: &'a Coverage,
    samples: &'a [UncertaintyReport],
}

#[allow(clippy::too_many_arguments)]
fn cmd_uncertainty(
    cfg: &RunConfig,
    checkpoint: &Path,
    dataset: &Path,
    split: SplitName,
    passes: usize,
    kind: Option<&str>,
    out: &Path,
) -> Result<(), CliError> {
    let (model, scaling) = load_model(checkpoint, kind)?;
    if model.arch().dropout_p() == 0.0 {
        eprintln!("warning: the model has no active dropout; every σ will be zero");
    }
    let records = load_records(dataset)?;
    let ex = split_examples(cfg, &records, split, &model, &scaling)?;
    let reports = mc_dropout(&model, &ex, passes, cfg.seed, cfg.workers)?;
    let truths = targets(&ex);
    let coverage = coverage_stats(&reports, &truths, &COVERAGE_LEVELS)?;
    let file = UncertaintyFile {
        split,
        n_samples: reports.len(),
        n_passes: passes,
        seed: cfg.seed,
        coverage: &coverage,
        samples: &reports,
    };
    write_json(&out.join("uncertainty.json"), &file)?;
    write_text(&out.join("uncertainty.csv"), &reports_csv(&reports, &truths))?;
    println!("joint coverage for n = 1..5: {:?}", coverage.joint);
    Ok(())
}
