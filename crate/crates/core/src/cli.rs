//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when an input fails validation (bad flags,
//! config or records), 2 when a run fails at runtime (I/O, numerical
//! failure, oracle disagreement).

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::io::{
    diagnostics_csv, ingest_responses, load_config, read_jsonl_file, write_jsonl, write_jsonl_file, write_report,
    ConfigLoadError, PredictionRecord, RecordError, ScoreRecord, TruthRecord,
};
use crate::metrics::{metric_report, MetricError, DEFAULT_BIN_WIDTH};
use crate::oracle::{compare_instance, OracleError, OracleInstance};
use crate::rewards::aggregate::score_batch;
use crate::rewards::RewardError;
use crate::sim::{dataset_for_config, run_training, SimError, SyntheticDataset, SyntheticSample};
use crate::types::{RunConfig, Stage, TaskKind};

/// Largest reward discrepancy the `oracle` command accepts.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "qa-reward", version, about = "Disentangled quality-assessment rewards and a toy training harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the toy score policy on synthetic data and write a run report.
    Train(TrainArgs),
    /// Score model responses against their MOS.
    Score(ScoreArgs),
    /// Compute SRCC, PLCC and the error histogram of predictions.
    Eval(EvalArgs),
    /// Cross-check the batch reward against the brute-force oracle.
    Oracle(OracleArgs),
    /// Write the synthetic dataset a configuration describes.
    Dataset(DatasetArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `key = value` configuration file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report output path (line-delimited JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write per-step diagnostics as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Train on this dataset (JSON lines) instead of a generated one.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Response records (JSON lines).
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `explore` applies the spread penalty, `stabilize` does not.
    #[arg(long, default_value = "explore")]
    pub stage: Stage,
    /// Answer template: `iqa` (five scores) or `vqa` (two).
    #[arg(long, default_value = "iqa")]
    pub task: TaskKind,
    /// Output path for score records; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction records `{sample_id, score}` (JSON lines).
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth records `{sample_id, mos}` (JSON lines).
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
    pub bin_width: f64,
    /// Output path for the metric report; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Instance file (JSON).
    #[arg(long)]
    pub instance: PathBuf,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<ConfigLoadError> for CliError {
    fn from(e: ConfigLoadError) -> Self {
        match e {
            ConfigLoadError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(format!("config: {e}")),
        }
    }
}

impl From<RecordError> for CliError {
    fn from(e: RecordError) -> Self {
        match e {
            RecordError::Malformed { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::BadArgument(_) | SimError::Config(_) | SimError::Type(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<RewardError> for CliError {
    fn from(e: RewardError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Io(_) | OracleError::Reward(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn config_from(path: Option<&PathBuf>, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn train(args: &TrainArgs) -> Result<(), CliError> {
    let cfg = config_from(args.config.as_ref(), args.seed)?;
    let dataset = match &args.dataset {
        Some(p) => SyntheticDataset::from_samples(read_jsonl_file::<SyntheticSample>(p)?, cfg.seed)?,
        None => dataset_for_config(&cfg)?,
    };
    let report = run_training(&cfg, &dataset)?;
    write_report(&args.out, &report)?;
    if let Some(csv) = &args.csv {
        std::fs::write(csv, diagnostics_csv(&report.per_step))?;
    }
    eprintln!(
        "trained {} steps on {} samples in {:.2}s: SRCC {:.4} -> {:.4}, PLCC {:.4} -> {:.4}",
        report.per_step.len(),
        dataset.len(),
        report.wall_time_seconds,
        report.initial_metrics.srcc,
        report.final_metrics.srcc,
        report.initial_metrics.plcc,
        report.final_metrics.plcc,
    );
    Ok(())
}

fn emit<T: serde::Serialize>(out: Option<&PathBuf>, records: &[T]) -> Result<(), CliError> {
    match out {
        Some(p) => write_jsonl_file(p, records)?,
        None => write_jsonl(std::io::stdout().lock(), records)?,
    }
    Ok(())
}

fn score(args: &ScoreArgs) -> Result<(), CliError> {
    let cfg = config_from(args.config.as_ref(), None)?;
    let groups = ingest_responses(&args.responses, args.task)?;
    if groups.is_empty() {
        return Err(CliError::Validation("no responses to score".into()));
    }
    let rewards = score_batch(&groups, &cfg, args.stage)?;
    let records: Vec<ScoreRecord> = groups
        .iter()
        .zip(&rewards)
        .flat_map(|(g, rs)| {
            g.generations().iter().zip(rs).enumerate().map(|(i, (gen, r))| ScoreRecord {
                sample_id: g.sample_id().to_string(),
                generation: i,
                prompt_id: gen.prompt_id(),
                format_valid: gen.format_valid(),
                reward: *r,
            })
        })
        .collect();
    emit(args.out.as_ref(), &records)?;
    let valid = records.iter().filter(|r| r.format_valid).count();
    let mean_total = records.iter().map(|r| r.reward.r_total).sum::<f64>() / records.len() as f64;
    eprintln!(
        "scored {} responses over {} samples ({} well-formed), mean total reward {:.6}",
        records.len(),
        groups.len(),
        valid,
        mean_total
    );
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let preds: Vec<PredictionRecord> = read_jsonl_file(&args.pred)?;
    let truth: Vec<TruthRecord> = read_jsonl_file(&args.truth)?;
    let mut by_id = HashMap::with_capacity(preds.len());
    for p in &preds {
        if by_id.insert(p.sample_id.as_str(), p.score).is_some() {
            return Err(CliError::Validation(format!("duplicate prediction for `{}`", p.sample_id)));
        }
    }
    let mut pred = Vec::with_capacity(truth.len());
    let mut seen = HashMap::with_capacity(truth.len());
    for t in &truth {
        if seen.insert(t.sample_id.as_str(), ()).is_some() {
            return Err(CliError::Validation(format!("duplicate ground truth for `{}`", t.sample_id)));
        }
        let score = by_id
            .get(t.sample_id.as_str())
            .ok_or_else(|| CliError::Validation(format!("no prediction for `{}`", t.sample_id)))?;
        pred.push(*score);
    }
    if let Some(extra) = preds.iter().find(|p| !seen.contains_key(p.sample_id.as_str())) {
        return Err(CliError::Validation(format!("prediction for unknown sample `{}`", extra.sample_id)));
    }
    let mos: Vec<f64> = truth.iter().map(|t| t.mos).collect();
    let report = metric_report(&pred, &mos, args.bin_width)?;
    emit(args.out.as_ref(), std::slice::from_ref(&report))?;
    eprintln!("n = {}: SRCC {:.6}, PLCC {:.6}", report.n, report.srcc, report.plcc);
    Ok(())
}

fn oracle(args: &OracleArgs) -> Result<(), CliError> {
    let instance = OracleInstance::load(&args.instance)?;
    let cmp = compare_instance(&instance)?;
    let n: usize = cmp.fast.iter().map(Vec::len).sum();
    let mut out = std::io::stdout().lock();
    writeln!(out, "samples {} generations {} max |delta| = {:.3e}", cmp.fast.len(), n, cmp.max_abs_diff)?;
    if cmp.max_abs_diff >= ORACLE_TOLERANCE {
        return Err(CliError::Runtime(format!(
            "fast path disagrees with the oracle by {:.3e} (tolerance {ORACLE_TOLERANCE:e})",
            cmp.max_abs_diff
        )));
    }
    Ok(())
}

fn dataset(args: &DatasetArgs) -> Result<(), CliError> {
    let cfg = config_from(args.config.as_ref(), args.seed)?;
    let data = dataset_for_config(&cfg)?;
    write_jsonl_file(&args.out, &data.samples)?;
    eprintln!("wrote {} samples with {} features", data.len(), data.feature_dim());
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Score(a) => score(a),
        Command::Eval(a) => eval(a),
        Command::Oracle(a) => oracle(a),
        Command::Dataset(a) => dataset(a),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
