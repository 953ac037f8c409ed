use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input data (bad shape, non-finite entries, parse errors).
    #[error("input error: {0}")]
    Input(String),

    /// Invalid configuration of a generator, solver or experiment.
    #[error("config error: {0}")]
    Config(String),

    /// A numeric parameter outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An object does not satisfy the precondition of an operation
    /// (for example a decomposition whose sensitivity exceeds one).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A matrix left the domain of a function (for example not positive definite).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
