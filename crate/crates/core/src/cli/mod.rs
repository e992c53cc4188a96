//! Config-driven command-line entry point.
//!
//! Every command reads a strict JSON config (unknown keys are errors),
//! writes its report to `--out` or stdout, and echoes the resolved config:
//! JSON reports embed it, CSV reports get a `<out>.config.json` sidecar.
//! Exit codes: 0 success, 1 internal failure, 2 config error, 3 data error,
//! 4 a checked expectation was not met (the report is still written).

mod commands;
mod config;
mod model;
mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use config::{
    CountConfig, CountExpect, DataConfig, ExpressivityConfig, ExpressivityExpect, MatrixConfig, MatrixKind, RecoverConfig,
    RecoverExpect, RipConfig, TargetKind, TrainCommandConfig, TrainExpect, TransformKind,
};
pub use model::{parse_table, ModelConfig, Preset};
pub use output::{sidecar_path, Report};
pub use commands::scaled;

#[derive(Parser, Debug)]
#[command(name = "rpnet", version, about = "Random-projection networks, RIP estimation and sparse recovery")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct CommonArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Report destination (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Trainable parameters and FLOPs per layer (CSV).
    Count(CommonArgs),
    /// Restricted isometry constants of a random matrix (JSON).
    Rip(CommonArgs),
    /// Sparse-recovery success rate against measurement count (CSV).
    Recover(CommonArgs),
    /// Train a network and log per-epoch metrics (CSV).
    Train(CommonArgs),
    /// Test error of random-projection regressors against projection width (CSV).
    Expressivity(CommonArgs),
}

/// Failure of a command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    /// The report was written but a configured expectation failed.
    Assertion(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Assertion(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Assertion(m) => write!(f, "expectation failed: {m}"),
            CliError::Internal(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        use crate::Error as E;
        match e {
            E::Data { .. } | E::Format(_) | E::Io(_) => CliError::Data(e.to_string()),
            E::Shape(_) | E::InvalidArgument(_) | E::InstanceTooLarge { .. } | E::TooFewPoints => {
                CliError::Config(e.to_string())
            }
            E::NonFinite(_) | E::RankDeficient { .. } => CliError::Internal(e.to_string()),
        }
    }
}

/// Caps rayon's global pool at `RPNET_THREADS` when set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("RPNET_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("RPNET_THREADS must be a positive integer, got {raw:?}")))?;
    // a pool may already exist when called twice in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandKind {
    Count,
    Rip,
    Recover,
    Train,
    Expressivity,
}

/// Runs one command on config text. Relative paths in the config resolve
/// against `base`. The report is returned even when an expectation fails.
pub fn execute(kind: CommandKind, base: &Path, text: &str, seed: Option<u64>) -> (Option<Report>, Result<(), CliError>) {
    let run = match kind {
        CommandKind::Count => commands::count,
        CommandKind::Rip => commands::rip,
        CommandKind::Recover => commands::recover,
        CommandKind::Train => commands::train,
        CommandKind::Expressivity => commands::expressivity,
    };
    let mut sink = output::Sink::default();
    let result = run(base, text, seed, &mut sink);
    (sink.into_report(), result)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    configure_threads()?;
    let (kind, args) = match &cli.command {
        Command::Count(a) => (CommandKind::Count, a),
        Command::Rip(a) => (CommandKind::Rip, a),
        Command::Recover(a) => (CommandKind::Recover, a),
        Command::Train(a) => (CommandKind::Train, a),
        Command::Expressivity(a) => (CommandKind::Expressivity, a),
    };
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let (report, result) = execute(kind, base, &text, args.seed);
    if let Some(report) = report {
        report.write(args.out.as_deref())?;
    }
    result
}

/// Binary entry point.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rpnet: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
