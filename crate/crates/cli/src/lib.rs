//! `editscore` command line: ingestion, MOS, baselines, training, ablations,
//! reports, the rating server and synthetic data.
//!
//! Every command writes into its `--out` directory and finishes with an
//! `artifacts.json` listing each file with its size and SHA-256.

pub mod commands;
pub mod rundir;
pub mod server;

use std::fmt;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "editscore", version, about = "Quality assessment for text-driven image edits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a manifest and write a resized case store.
    Ingest(IngestArgs),
    /// Z-score, screen and average raw ratings into a MOS table.
    Mos(MosArgs),
    /// Score every case with reference metrics and correlate with MOS.
    Baselines(BaselinesArgs),
    /// k-fold cross-validation of the assessment model.
    Train(TrainArgs),
    /// Cross-validate ablation variants.
    Ablate(AblateArgs),
    /// Tabulate stored evaluation reports.
    Report(ReportArgs),
    /// Run the rating service over HTTP.
    Serve(ServeArgs),
    /// Write a synthetic dataset and rating panel.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = editscore_core::dataset::DEFAULT_SHORTER_SIDE)]
    pub shorter_side: u32,
}

#[derive(Debug, Args)]
pub struct MosArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Only these dimensions (comma separated); default is every dimension present.
    #[arg(long, value_delimiter = ',')]
    pub dims: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BaselinesArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub mos: PathBuf,
    /// Scorer names (comma separated); default is every built-in scorer.
    #[arg(long, value_delimiter = ',')]
    pub scorers: Vec<String>,
    #[arg(long, default_value = editscore_core::subjective::DIM_OVERALL)]
    pub dim: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub mos: PathBuf,
    /// TOML run config; omitted sections take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `cv.k`.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Variant names (comma separated) or `all`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub variant: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Stored `report.json` files, one table row each.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Registered rater ids (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub raters: Vec<String>,
    /// Directory holding the journal; an existing journal is replayed.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub cases: usize,
    #[arg(long, default_value_t = 5)]
    pub raters: usize,
    #[arg(long, default_value_t = 0)]
    pub adversaries: usize,
    #[arg(long, default_value_t = 64)]
    pub size: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandResult {
    pub exit_code: i32,
    pub artifacts_written: Vec<PathBuf>,
    pub summary: String,
}

/// Why a command stopped: bad input (exit 1) or a failure while running (exit 2).
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    pub fn validation(e: impl fmt::Display) -> Self {
        Failure::Validation(e.to_string())
    }

    pub fn runtime(e: impl fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::runtime(e)
    }
}

pub fn run(cli: Cli) -> CommandResult {
    let result = match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Mos(a) => commands::mos(a),
        Command::Baselines(a) => commands::baselines(a),
        Command::Train(a) => commands::train(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Report(a) => commands::report(a),
        Command::Serve(a) => commands::serve(a),
        Command::Synth(a) => commands::synth(a),
    };
    result.unwrap_or_else(|f| CommandResult { exit_code: f.exit_code(), artifacts_written: vec![], summary: f.to_string() })
}
