//! Batch front end for the curation laws: config parsing, sweeps, reports.

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, ValueEnum};

pub const THREADS_ENV: &str = "CURATION_LAWS_THREADS";

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("tolerance exceeded: {0}")]
    Tolerance(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Tolerance(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Predictions at every grid point
    Theory,
    /// Monte Carlo estimates at every grid point
    Simulate,
    /// Theory joined with simulation, with relative errors
    Compare,
    /// Curated vs uncurated self-training rounds
    Collapse,
    /// Attainable (p, gamma) region and q_{p,u} samples
    Lens,
    /// Resolvent or test-margin probe
    Probe,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "curation-laws", version, about = "Scaling-law predictions for curated training data")]
pub struct Cli {
    pub command: Command,
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "N")]
    pub trials: Option<usize>,
    /// Output file; `.jsonl` selects JSON lines, anything else CSV. Stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<String>,
    #[arg(long, value_name = "X")]
    pub tolerance: Option<f64>,
}

/// Caps the global rayon pool from `CURATION_LAWS_THREADS`.
pub fn init_thread_pool() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    // a pool that already exists (tests calling twice) keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let overrides =
        config::Overrides { seed: cli.seed, trials: cli.trials, out: cli.out.clone(), tolerance: cli.tolerance };
    let cfg = config::Config::from_path(&cli.config)?.merged(&overrides)?.with_command_defaults(cli.command);
    let (table, verdict) = match cli.command {
        Command::Theory => (commands::theory(&cfg)?, Ok(())),
        Command::Simulate => (commands::simulate(&cfg)?, Ok(())),
        Command::Compare => {
            let report = commands::compare(&cfg)?;
            eprintln!("{}", report.summary());
            let verdict = report.verdict(cfg.tolerance());
            (report.table, verdict)
        }
        Command::Collapse => (commands::collapse(&cfg)?, Ok(())),
        Command::Lens => (commands::lens(&cfg)?, Ok(())),
        Command::Probe => (commands::probe(&cfg)?, Ok(())),
    };
    let path = cfg.output.as_ref().map(PathBuf::from);
    output::write(&table, &cfg, path.as_deref())?;
    verdict
}
