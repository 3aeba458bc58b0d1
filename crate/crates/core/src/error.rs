use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite feature value at index {index}")]
    NonFinite { index: usize },

    #[error("label must not be empty")]
    EmptyLabel,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("effective weight must be positive, got {0}")]
    NonPositiveWeight(f64),

    #[error("activation list is empty")]
    EmptyActivations,

    #[error("event history is empty")]
    EmptyHistory,

    #[error("event at {event} lies after the query time {now}")]
    FutureEvent { event: f64, now: f64 },

    #[error("time regression: {now} is earlier than the last recorded event {last}")]
    TimeRegression { now: f64, last: f64 },

    #[error("network has no clusters")]
    EmptyNetwork,

    #[error("object network is empty; teach objects before contexts")]
    NoObjectsTaught,

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("unknown location {0}")]
    UnknownLocation(u32),

    #[error("unknown instance `{0}`")]
    UnknownInstance(String),

    #[error("instance `{0}` already exists")]
    DuplicateInstance(String),

    #[error("label index is full (capacity {0})")]
    IndexFull(usize),

    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("unsupported snapshot version {0}")]
    SnapshotVersion(u32),

    #[error("io error: {0}")]
    Io(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
