use std::path::{Path, PathBuf};

use clap::Args;
use depthmetric::errorfield::DistanceMode;

use crate::config::RunConfig;
use crate::error::CliError;

pub mod evaluate;
pub mod register;
pub mod report;
pub mod simulate;
pub mod stats;

/// Flags accepted by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Globals {
    /// Configuration file: a simulation config for `simulate`, a run
    /// config for `register` and `evaluate`.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed for everything random.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (overrides the config's `output_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub no_viewfield_mask: bool,
    #[arg(long, global = true)]
    pub no_content_mask: bool,
    /// Exact point-to-triangle distance instead of the nearest-vertex plane.
    #[arg(long, global = true)]
    pub exact_face: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
}

impl Globals {
    pub fn distance_mode(&self) -> DistanceMode {
        if self.exact_face {
            DistanceMode::ExactFace
        } else {
            DistanceMode::NearestVertices
        }
    }

    /// `--out`, else the config's `output_dir`.
    pub fn out_dir(&self, cfg: &RunConfig) -> Result<PathBuf, CliError> {
        self.out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .ok_or_else(|| CliError::Usage("no output directory: pass --out or set `output_dir` in the config".into()))
    }
}

pub fn require_config(globals: &Globals) -> Result<&Path, CliError> {
    globals.config.as_deref().ok_or_else(|| CliError::Usage("this command needs --config <path>".into()))
}

/// Millimetres, for human-facing output.
pub fn mm(v: f64) -> String {
    format!("{:.3}", v * 1e3)
}
