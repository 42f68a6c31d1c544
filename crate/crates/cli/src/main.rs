//! `fbound`: free boundaries of irreversible investment problems.
//!
//! Exit codes: 0 success, 1 verification failure, 2 unsupported or invalid
//! configuration, 3 assumption violation, 4 numerical failure.

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fbound::{Error, Execution};

mod commands;
mod manifest;
mod output;
mod problem;

#[derive(Debug, Parser)]
#[command(name = "fbound", version, about = "Free boundaries of irreversible investment problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate b(x) on a log grid.
    Boundary(commands::BoundaryArgs),
    /// Run verification suites against a boundary.
    Verify(commands::VerifyArgs),
    /// Estimate the payoff of the reflection policy.
    Simulate(commands::SimulateArgs),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Io(String),
    #[error("verification failed: {}", .0.join("; "))]
    Verification(Vec<String>),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                Error::InvalidInput(_) | Error::Domain { .. } | Error::Unsupported(_) => 2,
                Error::Assumption(_) => 3,
                Error::Boundary(_) | Error::Numerics(_) => 4,
            },
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("FB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::InvalidInput(format!("FB_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let exec = Execution::Parallel;
    let run = match &cli.command {
        Command::Boundary(a) => commands::boundary(a, exec)?,
        Command::Verify(a) => commands::verify(a, exec)?,
        Command::Simulate(a) => commands::simulate(a, exec)?,
    };
    run.finish()
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fbound: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use fbound::numerics::NumericsError;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        let code = |e: Error| CliError::from(e).exit_code();
        assert_eq!(code(Error::Unsupported("x".into())), 2);
        assert_eq!(code(Error::InvalidInput("x".into())), 2);
        assert_eq!(code(Error::Assumption("x".into())), 3);
        assert_eq!(code(Error::Boundary("x".into())), 4);
        assert_eq!(code(Error::Numerics(NumericsError::NoDecay { at: 1.0 })), 4);
        assert_eq!(CliError::Verification(vec!["a".into()]).exit_code(), 1);
    }
}
