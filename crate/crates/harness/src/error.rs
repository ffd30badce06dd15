use std::path::PathBuf;

use greenrec::error::{DataError, SplitError};
use greenrec_energy::EnergyError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed results file: {msg}")]
    Results { path: PathBuf, msg: String },
}

impl HarnessError {
    pub(crate) fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| HarnessError::Io {
            path: path.to_owned(),
            source,
        }
    }
}
