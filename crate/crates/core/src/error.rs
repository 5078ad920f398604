use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },

    /// A structural rule of the trace was broken. `index` points at the first
    /// offending record when there is one.
    #[error("validation failed: {message}{}", index.map(|i| format!(" (first offending index {i})")).unwrap_or_default())]
    Validation {
        message: String,
        index: Option<usize>,
    },

    #[error("time {t} s outside odometry range [{start}, {end}]")]
    TimeOutOfRange { t: f64, start: f64, end: f64 },

    #[error("stream `{0}` has no frames")]
    EmptyStream(String),

    #[error("no sensor of kind {0}")]
    MissingSensor(&'static str),

    #[error("pose projects beyond the end of the trace")]
    EndOfTrace,

    #[error("no recorded frame within {limit} m of the agent (nearest {distance:.2} m)")]
    OutOfSupport { distance: f64, limit: f64 },

    #[error("point {index} lies at the sensor origin")]
    DegeneratePoint { index: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("densification needs at least 3 non-collinear valid cells, found {0}")]
    InsufficientSupport(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("episode is done")]
    EpisodeDone,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Corrupt {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn validation(message: impl Into<String>, index: Option<usize>) -> Self {
        Error::Validation {
            message: message.into(),
            index,
        }
    }

    /// True for errors that describe bad input data rather than usage or I/O.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. } | Error::Corrupt { .. } | Error::TimeOutOfRange { .. }
        )
    }
}
