use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("singular system: I - A is not invertible")]
    Singular,

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite or malformed data: {0}")]
    Data(String),

    #[error("optimality violated: round payoff {round} exceeds optimum {optimum}")]
    Consistency { round: f64, optimum: f64 },

    #[error("unsupported structure: {0}")]
    Structure(String),

    #[error("arm {0} has never been observed")]
    UnobservedArm(usize),

    #[error("degenerate instance: every feasible decision is optimal")]
    Degenerate,

    #[error("enumeration too large: {0} candidate decisions")]
    Size(u128),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("ingestion failed: {0}")]
    Ingest(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 2 for configuration problems,
    /// 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Singular
            | Error::Consistency { .. }
            | Error::Degenerate
            | Error::UnobservedArm(_) => 3,
            Error::Data(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
