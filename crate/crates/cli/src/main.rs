//! `acnoise`: simulate, run ensembles, verify suites and export tables.
//!
//! Exit codes: 0 success, 1 a check failed, 2 configuration error,
//! 3 numerical failure.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use acnoise_core::config::WORKERS_ENV;
use clap::{Args, Parser, Subcommand};

use commands::Overrides;

#[derive(Parser)]
#[command(name = "acnoise", version, about = "Allen-Cahn scaling-limit laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunFlags {
    /// TOML experiment file; every field has a default.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Suite to run; repeatable. Replaces the config's suite list.
    #[arg(long = "suite")]
    suites: Vec<String>,
}

impl From<RunFlags> for Overrides {
    fn from(f: RunFlags) -> Self {
        Self { config: f.config, out: f.out, workers: f.workers, seed: f.seed, suites: f.suites }
    }
}

#[derive(Subcommand)]
enum Command {
    /// One replica at a single (lambda, eps): snapshots and observables.
    Simulate(RunFlags),
    /// Ensembles over the configured ladders with moment reports.
    Ensemble(RunFlags),
    /// Run named suites and exit 1 if any check fails.
    Verify(RunFlags),
    /// Tidy tables and a text summary from a completed results directory.
    Report {
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<acnoise_core::Error>())
        .map_or(3, |e| if e.is_config() { 2 } else { 3 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(f) => commands::simulate(&f.into()),
        Command::Ensemble(f) => commands::ensemble(&f.into()),
        Command::Verify(f) => commands::verify(&f.into()),
        Command::Report { dir, out } => commands::report(&dir, out.as_deref()).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
