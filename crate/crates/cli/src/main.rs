//! `phasemac` command-line front end.
//!
//! Summaries go to stdout as `key: value` lines, traces go to files.
//! Exit codes: 0 success, 1 simulation or model error, 2 usage or validation error.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Sim(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Sim(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "phasemac",
    version,
    about = "Time-domain VCO multiply-accumulate simulator"
)]
struct Cli {
    /// Worker threads for sweeps and resampling (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sine-times-constant linearity experiment.
    Linearity(commands::LinearityArgs),
    /// Fit the third-order tuning coefficient to a target effective-bit count.
    Calibrate(commands::CalibrateArgs),
    /// Background gain-tracking loop under a frequency perturbation.
    Track(commands::TrackArgs),
    /// Resample a volume through a rigid transform on a MAC backend.
    Register(commands::RegisterArgs),
    /// Linearity experiment over a parameter grid.
    Sweep(commands::SweepArgs),
    /// Write a synthetic test volume.
    Phantom(commands::PhantomArgs),
    /// Energy bookkeeping for a number of MAC operations.
    Energy(commands::EnergyArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Sim(e.to_string()))?;
    }
    match cli.command {
        Command::Linearity(a) => commands::linearity(&a),
        Command::Calibrate(a) => commands::calibrate(&a),
        Command::Track(a) => commands::track(&a),
        Command::Register(a) => commands::register(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Phantom(a) => commands::phantom(&a),
        Command::Energy(a) => commands::energy(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
