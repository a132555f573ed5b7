//! `sgpca` command-line front end.

mod bench;
mod config;
mod eval;
mod fit;
mod output;
mod simulate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "sgpca", version, about = "Sparse generalized PCA for exponential-family data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a sparse low-rank model to a CSV data matrix.
    Fit(fit::FitArgs),
    /// Generate synthetic data from one of the benchmark settings.
    Simulate(simulate::SimulateArgs),
    /// Score a fitted model against simulated truth.
    Eval(eval::EvalArgs),
    /// Repeat simulate, fit and eval and summarize with trimmed means.
    Bench(bench::BenchArgs),
}

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input, or inconsistent shapes.
    Input(String),
    /// Invalid option values or combinations.
    Config(String),
    /// The solver failed numerically.
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Config(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<sgpca::Error> for CliError {
    fn from(e: sgpca::Error) -> Self {
        use sgpca::Error as E;
        let msg = e.to_string();
        match e {
            E::Config(_) => CliError::Config(msg),
            E::Numerical(_) | E::AllStartsFailed(_) => CliError::Numerical(msg),
            E::Domain { .. } | E::Shape(_) | E::Data(_) | E::Parse(_) | E::Io(_) => CliError::Input(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let cli = Cli::try_parse_from(args).unwrap_or_else(|e| e.exit());
    let result = match cli.command {
        Command::Fit(a) => fit::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Bench(a) => bench::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
