use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("diagonal is not a free parameter (variable {0} with itself)")]
    Diagonal(usize),

    #[error("{what} index {index} out of range 1..={max}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        max: usize,
    },

    #[error("matrix is not symmetric (|a[{row},{col}] - a[{col},{row}]| = {gap:e})")]
    Asymmetric { row: usize, col: usize, gap: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("correlation {0} lies outside (-1, 1)")]
    CorrelationOutOfRange(f64),

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("equality constraint {row} of {label} is redundant or contradicts earlier rows")]
    RankDeficient { label: String, row: usize },

    #[error("{context}: {found} usable draws, need at least {needed}")]
    InsufficientDraws {
        context: String,
        found: usize,
        needed: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("{file}: {msg}")]
    InvalidData { file: String, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn parse(file: &str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: file.to_string(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
