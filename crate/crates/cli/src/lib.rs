//! Experiment runner behind the `toeplitz-lab` binary.

pub mod config;
pub mod run;

use toeplitz_lab::Error;

pub use config::{parse_config, Command, Experiment, Format, RunConfig};
pub use run::{run, RunOutcome};

/// Exit code on success.
pub const EXIT_OK: i32 = 0;
/// Some assertion or certificate failed.
pub const EXIT_FAILED: i32 = 1;
/// Bad command line, configuration or input.
pub const EXIT_USAGE: i32 = 2;
/// A numerical routine did not converge.
pub const EXIT_CONVERGENCE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Clap(clap::Error),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Clap(e) if !e.use_stderr() => EXIT_OK,
            CliError::Run(Error::Convergence { .. }) => EXIT_CONVERGENCE,
            _ => EXIT_USAGE,
        }
    }
}

/// Parses, runs and reports; returns the process exit code.
pub fn main_with_args(args: &[String]) -> i32 {
    let config = match parse_config(args, None) {
        Ok(c) => c,
        Err(CliError::Clap(e)) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match run(&config) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if outcome.pass {
                EXIT_OK
            } else {
                eprintln!("failed: {}", outcome.failures.join("; "));
                EXIT_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
