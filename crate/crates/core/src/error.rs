use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("frequency at or above Nyquist: {0}")]
    Aliasing(String),

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("degenerate reference: {0}")]
    DegenerateReference(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable, machine-readable category name.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::LengthMismatch(_) => "length-mismatch",
            Error::Domain(_) => "domain",
            Error::Aliasing(_) => "aliasing",
            Error::Index { .. } => "index",
            Error::DegenerateReference(_) => "degenerate-reference",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
