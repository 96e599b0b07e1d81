use crate::model::StreamId;

/// Errors produced by the synopses, generators and evaluation harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value {value} outside the domain [1, {universe}]")]
    ValueOutOfRange { value: u64, universe: u64 },

    #[error("relative error undefined for a zero reference value")]
    ZeroDenominator,

    #[error("sketches have different width, depth or seed and cannot be merged")]
    IncompatibleSketch,

    #[error("counter overflow")]
    CounterOverflow,

    #[error("summary is empty")]
    EmptySummary,

    #[error("stream {0} has no (estimated) items")]
    EmptyStream(StreamId),

    #[error("second-largest value needs at least two items in stream {0}")]
    SingletonStream(StreamId),

    #[error("k must be at least 1")]
    InvalidK,

    #[error("weight `{weight}` is not supported by {algo}: {reason}")]
    UnsupportedWeight {
        algo: &'static str,
        weight: String,
        reason: &'static str,
    },

    #[error("set sizes differ: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("no exact rank for stream {0}")]
    MissingRank(StreamId),

    #[error("set-disjointness promise violated: {0}")]
    PromiseViolation(String),

    #[error("malformed input at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("malformed snapshot: {0}")]
    Snapshot(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
