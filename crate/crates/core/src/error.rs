use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix that must be symmetric positive definite was not.
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// An index refers to the wrong kind of site (e.g. removing an inactive atom).
    #[error("index error: {0}")]
    Index(String),

    /// The maximum-likelihood fit failed to improve on its starting point.
    #[error("optimization failed: {0}")]
    Optimization(String),

    /// Every coordinate of a diagnostic was degenerate.
    #[error("singular diagnostic: {0}")]
    Singular(String),

    /// The requested configuration cannot be realized.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Invalid user configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input file.
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
