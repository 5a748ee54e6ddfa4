use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("line {line}: segment length must be positive, got {length}")]
    NonpositiveLength { line: u64, length: f64 },

    #[error("line {line}: unknown road category `{token}`")]
    UnknownCategory { line: u64, token: String },

    #[error("line {line}: duplicate segment id `{id}`")]
    DuplicateSegment { line: u64, id: String },

    #[error("line {line}: segment `{id}` is not in the road network")]
    UnknownSegment { line: u64, id: String },

    #[error("trip `{trip}`: sequence indices are not contiguous from 0 (expected {expected}, found {found})")]
    NonContiguousSequence {
        trip: String,
        expected: u64,
        found: u64,
    },

    #[error("trip `{trip}`: first traversal has no arrival time")]
    MissingFirstArrival { trip: String },

    #[error("route is not connected between positions {position} and {}", position + 1)]
    DisconnectedRoute { position: usize },

    #[error("route is empty")]
    EmptyRoute,

    #[error("traversal {index} has no arrival time")]
    MissingArrival { index: usize },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("expected speed must be positive, got {speed} at position {position}")]
    NonpositiveSpeed { position: usize, speed: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("shape mismatch for `{name}`: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("bad snapshot: {0}")]
    Snapshot(String),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors raised by numeric failure rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::NonpositiveSpeed { .. })
    }
}
