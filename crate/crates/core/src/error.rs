use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = TcsError> = std::result::Result<T, E>;

/// Every failure the library can surface, grouped by category so the CLI can
/// map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum TcsError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Structural(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("degenerate treatment: {0}")]
    DegenerateTreatment(String),

    #[error("selection error: {0}")]
    Selection(String),

    #[error("training diverged for member seed {seed}: {reason}")]
    Training { seed: u64, reason: String },

    #[error("adjustment error: {0}")]
    Adjustment(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error at {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl TcsError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TcsError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        TcsError::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Short category tag, stable across releases.
    pub fn category(&self) -> &'static str {
        match self {
            TcsError::Config(_) => "config",
            TcsError::Structural(_) => "structural",
            TcsError::Numerical(_) => "numerical",
            TcsError::Usage(_) => "usage",
            TcsError::Data(_) => "data",
            TcsError::DegenerateTreatment(_) => "degenerate-treatment",
            TcsError::Selection(_) => "selection",
            TcsError::Training { .. } => "training",
            TcsError::Adjustment(_) => "adjustment",
            TcsError::UndefinedMetric(_) => "undefined-metric",
            TcsError::Ingestion(_) => "ingestion",
            TcsError::Io { .. } => "io",
            TcsError::Format { .. } => "format",
        }
    }

    /// Process exit code for the CLI. Zero is reserved for success.
    pub fn exit_code(&self) -> i32 {
        match self {
            TcsError::Config(_) | TcsError::Usage(_) => 2,
            TcsError::Structural(_) | TcsError::Data(_) | TcsError::Ingestion(_) => 3,
            TcsError::Numerical(_) | TcsError::Training { .. } | TcsError::Adjustment(_) => 4,
            TcsError::DegenerateTreatment(_)
            | TcsError::Selection(_)
            | TcsError::UndefinedMetric(_) => 5,
            TcsError::Io { .. } | TcsError::Format { .. } => 6,
        }
    }
}
