//! Command-line runner: synthetic data generation, training, evaluation,
//! single-route estimation, robustness curves and hyperparameter sweeps.
//!
//! Every subcommand accepts the same options, from a `key = value` config
//! file (`--config`) and from flags; flags win. Exit codes: 0 success,
//! 2 usage error, 3 data error, 4 numeric failure.

mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{resolve, Options};
use error::Result;

#[derive(Debug, Parser)]
#[command(
    name = "unite",
    version,
    about = "Travel speed estimation with neural priors and conjugate updates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic network, trajectory splits and ground truth.
    GenData(Options),
    /// Train a gru or unite-dis model.
    Train(Options),
    /// Evaluate an estimator on a trajectory set.
    Evaluate(Options),
    /// Estimate per-segment speed distributions and travel time for one route.
    Estimate(Options),
    /// Mean sNLL by the number of available records.
    Robustness(Options),
    /// Data-efficiency or record-selection sweep.
    Sweep(Options),
}

fn run(command: &Command) -> Result<()> {
    match command {
        Command::GenData(o) => commands::gen_data(&resolve(o)?),
        Command::Train(o) => commands::train_cmd(&resolve(o)?),
        Command::Evaluate(o) => commands::evaluate_cmd(&resolve(o)?),
        Command::Estimate(o) => commands::estimate_cmd(&resolve(o)?),
        Command::Robustness(o) => commands::robustness_cmd(&resolve(o)?),
        Command::Sweep(o) => commands::sweep_cmd(&resolve(o)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
