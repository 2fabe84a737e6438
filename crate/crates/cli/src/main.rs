use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use entwave_cli::{run, Command};

/// Symmetry-resolved distributed exact diagonalization.
#[derive(Parser)]
#[command(name = "entwave", version)]
struct Args {
    /// Subcommand to run.
    #[arg(value_enum)]
    command: Command,
    /// TOML experiment configuration.
    config: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args.command, &args.config) {
        Ok(report) => {
            if let Some(e) = report.get("energy").and_then(|e| e.as_f64()) {
                println!("E0 = {e}");
            }
            if let Some(p) = report.get("pass") {
                println!("pass = {p}");
            }
            if let Some(points) = report.get("points").and_then(|p| p.as_array()) {
                println!("points = {}", points.len());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("entwave: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
