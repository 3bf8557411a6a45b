//! `radlung`: batch pipeline from CT volumes and clinical records to ICU
//! admission prediction reports.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Resolved;

#[derive(Parser)]
#[command(name = "radlung", version, about = "Lung CT radiomics and ICU-admission prediction")]
struct Cli {
    /// JSON pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed, added to every component seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also rank and select features once on the whole cohort.
    #[arg(long, global = true)]
    paper_faithful: bool,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Image features per subject, joined with the clinical table.
    Extract,
    /// Feature ranking and K sweep on the whole cohort.
    Rank,
    /// Cross-validated comparison of feature-group combinations.
    Eval,
    /// Train on one site, test on another, for every site pair.
    Transfer,
    /// Write a synthetic phantom cohort.
    Synth,
    /// Collect the stage outputs into one Markdown report.
    Report,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    MissingStage { path: PathBuf, stage: String },
    Partial { failed: usize, total: usize },
    Runtime(anyhow::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid configuration: {m}"),
            CliError::MissingStage { path, stage } => {
                write!(f, "{} not found; run `radlung {stage}` first", path.display())
            }
            CliError::Partial { failed, total } => {
                write!(f, "{failed} of {total} subjects failed; see extract_errors.txt")
            }
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Partial { .. } => 2,
            _ => 1,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Validation("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Runtime(e.into()))?;
    }
    let r = Resolved::load(cli.config.as_deref(), cli.seed, cli.paper_faithful)?;
    match cli.command {
        Command::Extract => commands::extract(&r),
        Command::Rank => commands::rank(&r),
        Command::Eval => commands::eval(&r),
        Command::Transfer => commands::transfer(&r),
        Command::Synth => commands::synth(&r),
        Command::Report => commands::report(&r),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
