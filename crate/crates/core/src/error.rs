use std::path::PathBuf;

use thiserror::Error;

/// Failures while reading, cleaning or describing a dataset.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed input {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("column mapping uses `{0}` for more than one field")]
    DuplicateColumn(String),
    #[error("row {row}: cannot parse {field} value `{value}`")]
    Parse {
        row: usize,
        field: &'static str,
        value: String,
    },
    #[error("invalid rating scale [{min}, {max}]")]
    InvalidScale { min: f64, max: f64 },
    #[error("threshold {threshold} lies outside the rating scale [{min}, {max}]")]
    ThresholdOutsideScale { threshold: f64, min: f64, max: f64 },
    #[error("dataset `{0}` is empty")]
    Empty(String),
    #[error("synthetic generator: {0}")]
    Synthetic(String),
}

/// Failures while partitioning interactions or reading a cached split.
#[derive(Debug, Error)]
pub enum SplitError {
    #[error("invalid split configuration: {0}")]
    Config(String),
    #[error("need at least {needed} interactions, have {have}")]
    TooFew { needed: usize, have: usize },
    #[error("no user survives the minimum-interaction filter (min {0})")]
    NoEligibleUsers(usize),
    #[error("split cache checksum mismatch: manifest {expected}, files {actual}")]
    Checksum { expected: String, actual: String },
    #[error("split cache i/o at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("split cache manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Failures raised by recommenders and ensembles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyTrain,
    #[error("capacity: similarity matrix needs {required} bytes, budget is {budget}")]
    Capacity { required: u64, budget: u64 },
    #[error("invalid hyperparameter: {0}")]
    Config(String),
    #[error("input violates model precondition: {0}")]
    Precondition(String),
    #[error("model used before fit")]
    NotFitted,
    #[error("base model `{model}` failed: {source}")]
    Base {
        model: String,
        #[source]
        source: Box<ModelError>,
    },
}

impl ModelError {
    /// The innermost error, unwrapping ensemble base wrappers.
    pub fn root(&self) -> &ModelError {
        match self {
            ModelError::Base { source, .. } => source.root(),
            other => other,
        }
    }

    /// Short machine-readable failure reason used in result records.
    pub fn reason(&self) -> &'static str {
        match self.root() {
            ModelError::EmptyTrain => "empty-train",
            ModelError::Capacity { .. } => "capacity",
            ModelError::Config(_) => "config",
            ModelError::Precondition(_) => "precondition",
            ModelError::NotFitted => "not-fitted",
            ModelError::Base { .. } => unreachable!("root() strips Base"),
        }
    }
}

/// Failures from the metric functions.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("metric input is empty")]
    Empty,
    #[error("invalid metric parameter: {0}")]
    Parameter(String),
}
