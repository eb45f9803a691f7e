//! Run configuration (JSON). Relative paths are resolved against the
//! directory holding the configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use depthmetric::maskpool::{TileSpec, DEFAULT_COLUMNS, DEFAULT_OUTLIER_THRESHOLD, DEFAULT_ROWS};
use depthmetric::registration::Method;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_HEATMAP_RANGE_MM: f64 = 10.0;
pub const DEFAULT_LONG_TABLE: &str = "long_table.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: PathBuf,
    pub frames: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correspondences: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_log: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub registration: RegistrationConfig,
    #[serde(default)]
    pub masks: MaskConfig,
    /// Run configuration of the other camera; its footprint restricts this
    /// run to the surface both cameras see.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub viewfield_partner: Option<PathBuf>,
    #[serde(default)]
    pub tiles: TileConfig,
    #[serde(default = "default_threshold")]
    pub outlier_threshold: f64,
    #[serde(default = "default_heatmap_range")]
    pub heatmap_range_mm: f64,
    /// Factor levels (A, B, C) of this run in the long table; read from the
    /// frame file's camera/tissue/zoom labels when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<[String; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicate: Option<String>,
    #[serde(default = "default_long_table")]
    pub long_table: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistrationConfig {
    #[serde(default = "default_method")]
    pub mode: Method,
    /// Time at which the pins were observed (t_p), seconds.
    #[serde(default)]
    pub anchor_time: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig { mode: Method::Pins, anchor_time: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskConfig {
    #[serde(default = "yes")]
    pub viewfield: bool,
    #[serde(default = "yes")]
    pub content: bool,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig { viewfield: true, content: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileConfig {
    pub columns: usize,
    pub rows: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        TileConfig { columns: DEFAULT_COLUMNS, rows: DEFAULT_ROWS }
    }
}

impl From<TileConfig> for TileSpec {
    fn from(t: TileConfig) -> TileSpec {
        TileSpec { columns: t.columns, rows: t.rows }
    }
}

fn default_method() -> Method {
    Method::Pins
}

fn yes() -> bool {
    true
}

fn default_threshold() -> f64 {
    DEFAULT_OUTLIER_THRESHOLD
}

fn default_heatmap_range() -> f64 {
    DEFAULT_HEATMAP_RANGE_MM
}

fn default_long_table() -> PathBuf {
    PathBuf::from(DEFAULT_LONG_TABLE)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.to_path_buf(), source })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads, resolves and validates a configuration. Input files must exist.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let mut cfg: RunConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.validate(path)?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        self.mesh = resolve(base, &self.mesh);
        self.frames = resolve(base, &self.frames);
        self.long_table = resolve(base, &self.long_table);
        for p in [&mut self.correspondences, &mut self.pose_log, &mut self.output_dir, &mut self.viewfield_partner]
            .into_iter()
            .flatten()
        {
            *p = resolve(base, p);
        }
    }

    fn validate(&self, path: &Path) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::config(path, msg));
        if !(self.outlier_threshold > 0.0 && self.outlier_threshold <= 1.0) {
            return bad(format!("outlier_threshold must lie in (0, 1], got {}", self.outlier_threshold));
        }
        if self.tiles.columns == 0 || self.tiles.rows == 0 {
            return bad("tile grid needs at least one column and one row".into());
        }
        if !(self.heatmap_range_mm > 0.0 && self.heatmap_range_mm.is_finite()) {
            return bad(format!("heatmap_range_mm must be positive, got {}", self.heatmap_range_mm));
        }
        if !self.registration.anchor_time.is_finite() {
            return bad("anchor_time must be finite".into());
        }
        if let Some(f) = &self.factors {
            if let Some(level) = f.iter().find(|l| !is_label(l)) {
                return bad(format!("factor level {level:?} must be a non-empty label without commas or whitespace"));
            }
        }
        if self.replicate.as_deref().is_some_and(|r| !is_label(r)) {
            return bad("replicate must be a non-empty label without commas or whitespace".into());
        }
        let required = match self.registration.mode {
            Method::Pins => vec![("correspondences", &self.correspondences)],
            Method::Kine => vec![("correspondences", &self.correspondences), ("pose_log", &self.pose_log)],
        };
        for (name, p) in required {
            if p.is_none() {
                return bad(format!("`{name}` is required for {:?} registration", self.registration.mode));
            }
        }
        let inputs = [Some(&self.mesh), Some(&self.frames), self.correspondences.as_ref(), self.pose_log.as_ref()];
        for p in inputs.into_iter().flatten().chain(self.viewfield_partner.as_ref()) {
            if !p.is_file() {
                return bad(format!("input file {} does not exist", p.display()));
            }
        }
        Ok(())
    }
}

/// Labels end up unquoted in CSV files.
pub fn is_label(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c == ',' || c == '"' || c.is_whitespace())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["mesh.ply", "frames.ocf", "pins.csv"] {
            write(dir.path(), f, "");
        }
        let cfg = write(
            dir.path(),
            "run.json",
            r#"{"mesh": "mesh.ply", "frames": "frames.ocf", "correspondences": "pins.csv"}"#,
        );
        let c = RunConfig::load(&cfg).unwrap();
        assert_eq!(c.mesh, dir.path().join("mesh.ply"));
        assert_eq!(c.long_table, dir.path().join(DEFAULT_LONG_TABLE));
        assert_eq!(c.outlier_threshold, 0.95);
        assert_eq!(c.tiles, TileConfig { columns: 6, rows: 5 });
        assert_eq!(c.heatmap_range_mm, 10.0);
        assert!(c.masks.viewfield && c.masks.content);
        assert_eq!(c.registration.mode, Method::Pins);
    }

    #[test]
    fn rejects_bad_values_with_path() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["m.ply", "f.ocf", "p.csv"] {
            write(dir.path(), f, "");
        }
        let cases = [
            r#"{"mesh": "m.ply", "frames": "f.ocf", "correspondences": "p.csv", "outlier_threshold": 0}"#,
            r#"{"mesh": "m.ply", "frames": "f.ocf", "correspondences": "p.csv", "outlier_threshold": 1.5}"#,
            r#"{"mesh": "m.ply", "frames": "f.ocf", "correspondences": "p.csv", "registration": {"mode": "kine"}}"#,
            r#"{"mesh": "missing.ply", "frames": "f.ocf", "correspondences": "p.csv"}"#,
            r#"{"mesh": "m.ply", "frames": "f.ocf", "correspondences": "p.csv", "factors": ["a", "b c", "d"]}"#,
            r#"{"mesh": "m.ply", "frames": "f.ocf", "correspondences": "p.csv", "typo": 1}"#,
        ];
        for text in cases {
            let cfg = write(dir.path(), "run.json", text);
            let err = RunConfig::load(&cfg).unwrap_err();
            assert!(err.to_string().contains("run.json"), "{err}");
        }
    }

    #[test]
    fn threshold_one_is_allowed() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["m.ply", "f.ocf", "p.csv"] {
            write(dir.path(), f, "");
        }
        let cfg = write(
            dir.path(),
            "run.json",
            r#"{"mesh": "m.ply", "frames": "f.ocf", "correspondences": "p.csv", "outlier_threshold": 1}"#,
        );
        assert_eq!(RunConfig::load(&cfg).unwrap().outlier_threshold, 1.0);
    }
}
