//! `cogdiag`: train, diagnose, evaluate and benchmark cognitive diagnosis
//! models from the command line.

mod args;
mod commands;
mod config;
mod model_file;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Failure of a command, carrying what decides the exit code.
#[derive(Debug)]
pub enum CliError {
    Core(cogdiag::Error),
    Usage(String),
}

impl From<cogdiag::Error> for CliError {
    fn from(e: cogdiag::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub fn usage<T>(message: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(message.into()))
}

/// 2 usage or I/O, 3 infeasible hyperparameters, 4 undiagnosable input,
/// 5 metric precondition.
fn exit_code(e: &CliError) -> u8 {
    use cogdiag::Error as E;
    match e {
        CliError::Usage(_) => 2,
        CliError::Core(e) => match e {
            E::InfeasibleLambda { .. }
            | E::InfeasibleBounds { .. }
            | E::NonFinite { .. }
            | E::NonFiniteGradient { .. } => 3,
            E::NoEvidence | E::AllItemsUnknown { .. } => 4,
            E::NoDuplicateRows | E::NoComparablePairs => 5,
            _ => 2,
        },
    }
}

fn main() -> ExitCode {
    let argv = match config::expand_config(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(argv);
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    let result = match cli.command {
        Command::Synth(a) => commands::synth::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Diagnose(a) => commands::diagnose::run(a),
        Command::Evaluate(a) => commands::evaluate::run(a),
        Command::Bench(a) => commands::bench::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
