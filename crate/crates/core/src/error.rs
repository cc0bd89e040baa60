use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("innovation covariance is numerically singular")]
    DegenerateInnovation,

    #[error("filter collapse: every particle weight vanished on day {day}")]
    FilterCollapse { day: usize },

    #[error("chain has no retained records")]
    EmptyChain,

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateInnovation | Error::FilterCollapse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
