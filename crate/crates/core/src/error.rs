use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input outside the domain of a formula (non-positive mass, pole of
    /// a resonance denominator, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The physical model cannot be built from the given parameters.
    #[error("model error: {0}")]
    Model(String),

    /// An iterative or integration routine failed to meet its tolerance.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A caller broke a documented precondition (shape mismatch, asymmetric
    /// Hamiltonian, bad index).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("fit error: {0}")]
    Fit(String),

    /// Configuration problems; the message starts with the key path.
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }
}
