use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

mod commands;
mod config;
mod manifest;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ampf",
    version,
    about = "Prototype-based open-set recognition with a learnable margin radius"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write its checkpoint, trajectory and manifest.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; overrides AMPF_OUT_DIR and the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// One of mpf, ampf, ampfpp.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Score a data set with a trained model.
    Eval {
        /// Checkpoint written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Evaluate the test split described by this config.
        #[arg(long, conflicts_with = "data")]
        config: Option<PathBuf>,
        /// Evaluate this CSV (header f0..f{d-1},label) instead.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed used to regenerate synthetic data from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize a trajectory and check it against the radius motion laws.
    Trace {
        trajectory: PathBuf,
        /// Take λ, β and momentum from this config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        momentum: Option<f64>,
        /// Absolute tolerance on each radius increment.
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train {
            config,
            out,
            seed,
            strategy,
        } => commands::train(config.as_deref(), out.as_deref(), seed, strategy.as_deref()),
        Command::Eval {
            model,
            config,
            data,
            out,
            seed,
        } => commands::eval(&model, config.as_deref(), data.as_deref(), out.as_deref(), seed),
        Command::Trace {
            trajectory,
            config,
            lambda,
            beta,
            momentum,
            tolerance,
        } => commands::trace(&trajectory, config.as_deref(), lambda, beta, momentum, tolerance),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ampf: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
