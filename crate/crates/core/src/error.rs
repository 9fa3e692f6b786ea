use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid transform spec: {0}")]
    InvalidSpec(String),

    #[error("invalid window: start {start} is after end {end}")]
    InvalidWindow { start: String, end: String },

    #[error("invalid month key: {0}")]
    InvalidMonth(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("too few observations: need at least {needed}, have {have}")]
    TooFewObservations { needed: usize, have: usize },

    #[error("series `{0}` is defined more than once")]
    DuplicateSeries(String),

    #[error("series `{0}` is constant")]
    ConstantSeries(String),

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("rank-deficient design; offending columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("fits are not comparable: {0}")]
    NotComparable(String),

    #[error("quarter {0} has no records")]
    MissingQuarter(String),

    #[error("panel coverage gap in `{series}` at {}", .months.join(", "))]
    Coverage { series: String, months: Vec<String> },

    #[error("no records left after the appraisal filter")]
    EmptyAfterFilter,

    #[error("degenerate response: {0}")]
    DegenerateResponse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("failed to write output: {0}")]
    Output(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::InvalidSpec(_) | Error::InvalidWindow { .. } => {
                ErrorClass::Config
            }
            Error::RankDeficient(_) | Error::Numerical(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn output(e: impl std::fmt::Display) -> Self {
        Error::Output(e.to_string())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
