//! Command-line driver for the immunet detectors.
//!
//! The binary is a thin wrapper over [`run_cli`]. The pieces it wires
//! together are public so tests and scripts can drive them directly:
//! [`config::RunConfig`] for versioned configuration files, [`run`] for
//! detection runs and their CSV reports, [`eval`] for scoring reports against
//! labels, [`sweep`] for parameter sweeps and [`serve`] for live runs fed by
//! the ingestion server.

use std::ffi::OsString;
use std::process::ExitCode;

use clap::Parser;
use thiserror::Error;

pub mod args;
pub mod commands;
pub mod config;
pub mod eval;
pub mod run;
pub mod serve;
pub mod sweep;

pub use config::{Engine, RunConfig};
pub use eval::{evaluate, EvalReport};

/// Exit status for usage and configuration errors.
pub const EXIT_USAGE: u8 = 2;
/// Exit status for failures after a run has started.
pub const EXIT_RUNTIME: u8 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, configuration or input files.
    #[error("{0}")]
    Usage(String),
    /// The run itself failed.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
