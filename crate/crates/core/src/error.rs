use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum AopError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("point {t} lies outside the domain [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("degenerate constraint matrix at level {level} (condition number {condition:e})")]
    DegenerateConstraint { level: usize, condition: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl AopError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AopError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage/config, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            AopError::Config(_) | AopError::Precondition(_) | AopError::Dimension { .. } => 1,
            AopError::Domain { .. } | AopError::Data(_) | AopError::Io { .. } => 2,
            AopError::DegenerateConstraint { .. } | AopError::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, AopError>;
