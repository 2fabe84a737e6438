//! Command-line driver: configuration, subcommands and report files.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::{ExperimentConfig, Resolved};
pub use error::CliError;

use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Solve,
    Oracle,
    Sweep,
    Analyze,
}

/// Loads and validates `path`, then runs `command`.
pub fn run(command: Command, path: &Path) -> Result<serde_json::Value, CliError> {
    let resolved = ExperimentConfig::load(path)?.resolve()?;
    match command {
        Command::Solve => commands::solve(&resolved),
        Command::Oracle => commands::oracle(&resolved),
        Command::Sweep => commands::sweep(&resolved),
        Command::Analyze => commands::analyze(&resolved),
    }
}
