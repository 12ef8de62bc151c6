//! `abxlab`: ABX evaluation, label-quality analysis, synthetic corpora and
//! toy APC training from the command line.
//!
//! Exit codes: 0 success, 1 runtime failure (including a failed gradient
//! check), 2 usage or invalid configuration, 3 data validation error,
//! 4 empty task, 5 inconclusive gradient check.

mod analyze;
mod apc;
mod eval;
mod output;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "abxlab", version, about = "Subword discriminability toolkit")]
struct Cli {
    /// Worker threads (default: logical core count).
    #[arg(long, global = true, env = "ABXLAB_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a feature archive on a phone or AF ABX task.
    Eval(eval::EvalArgs),
    /// Phoneme-level rates, confusion matrices, reductions and correlations.
    #[command(subcommand)]
    Analyze(analyze::AnalyzeCommand),
    /// Generate a synthetic corpus with known phone means.
    Synth(synth::SynthArgs),
    /// Train, apply or verify a toy APC model.
    #[command(subcommand)]
    Apc(apc::ApcCommand),
}

#[derive(Args, Clone, Debug)]
pub struct OutDir {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(abxlab::Error),
    GradcheckFailed(f64),
    GradcheckInconclusive,
    Runtime(String),
}

impl From<abxlab::Error> for CliError {
    fn from(e: abxlab::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(abxlab::Error::Argument(_)) => 2,
            CliError::Core(abxlab::Error::EmptyTask { .. }) => 4,
            CliError::Core(e) if e.is_validation() => 3,
            CliError::GradcheckInconclusive => 5,
            CliError::Core(_) | CliError::GradcheckFailed(_) | CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::GradcheckFailed(r) => {
                write!(f, "gradient check failed: max relative error {r:e}")
            }
            CliError::GradcheckInconclusive => {
                write!(f, "gradient check inconclusive: every sample sat on an L1 kink")
            }
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

/// Reads a JSON config file into `T`; unknown keys are usage errors.
pub fn read_json_config<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: invalid config: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let jobs = cli.jobs.unwrap_or(0);
    if jobs > 0 {
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match cli.command {
        Command::Eval(a) => eval::run(a, jobs),
        Command::Analyze(c) => analyze::run(c),
        Command::Synth(a) => synth::run(a),
        Command::Apc(c) => apc::run(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("abxlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
