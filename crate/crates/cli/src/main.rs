//! `depthmetric`: simulate → register → evaluate → stats → report.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;
mod output;

use commands::Globals;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "depthmetric", version, about = "Depth-camera accuracy evaluation against ground-truth meshes")]
struct Cli {
    #[command(flatten)]
    globals: Globals,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene and recordings from a simulation config.
    Simulate,
    /// Solve the camera→organ transform of a run (pins or kinematic chain).
    Register {
        /// Time (s) to evaluate a kinematic registration at; defaults to the anchor time.
        #[arg(long)]
        at: Option<f64>,
    },
    /// Compute per-pixel metrics, heatmaps and pooled tiles of a run, and
    /// add them to the long table.
    Evaluate,
    /// ART ANOVA of a long table, one CSV per metric.
    Stats {
        /// Long table CSV (default: the run config's long table).
        table: Option<PathBuf>,
        /// Only this metric (default: every metric in the table).
        #[arg(long)]
        metric: Option<String>,
    },
    /// Per-condition grand means of a run directory's long table.
    Report {
        /// Directory holding `long_table.csv` (default: --out, else `.`).
        run_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.globals.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        depthmetric::exec::set_thread_count(n).map_err(CliError::Usage)?;
    }
    let g = &cli.globals;
    match cli.command {
        Command::Simulate => commands::simulate::run(g),
        Command::Register { at } => commands::register::run(g, at),
        Command::Evaluate => commands::evaluate::run(g),
        Command::Stats { table, metric } => commands::stats::run(g, table, metric),
        Command::Report { run_dir } => commands::report::run(g, run_dir),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
