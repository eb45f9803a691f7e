use std::path::PathBuf;

use depthmetric::meshio::MeshIoError;
use depthmetric::pipeline::PipelineError;
use depthmetric::registration::RegistrationError;
use depthmetric::sensorsim::SimError;
use depthmetric::stats::StatsError;

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: invalid JSON: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: {msg}", path.display())]
    Config { path: PathBuf, msg: String },
    #[error("{}: could not write: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: BoxError,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Mesh(#[from] MeshIoError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("{}: registration failed: {source}", path.display())]
    Registration {
        path: PathBuf,
        #[source]
        source: RegistrationError,
    },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl CliError {
    pub fn config(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        CliError::Config { path: path.into(), msg: msg.into() }
    }
}
