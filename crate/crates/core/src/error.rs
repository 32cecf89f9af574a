use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("input has {got} features, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid network shape: {0}")]
    InvalidShape(String),
    #[error("layer {0} contains a non-finite weight or bias")]
    NonFinite(usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Network(#[from] NnError),
    #[error("root sample lies outside the input domain at coordinate {0}")]
    RootOutsideDomain(usize),
    #[error("negative or non-finite radius {0}")]
    BadRadius(f64),
    #[error("domain box has {got} coordinates, network expects {expected}")]
    DomainMismatch { expected: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("IDX parse error at byte offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("image file has {images} entries but label file has {labels}")]
    CountMismatch { images: usize, labels: usize },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("could not read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("dataset invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("writing report to {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentError {
    /// Validation problems map to exit code 2, everything else to 3.
    pub fn is_validation(&self) -> bool {
        matches!(self, ExperimentError::Config(_)) || matches!(self, ExperimentError::Engine(EngineError::Config(_)))
    }
}
