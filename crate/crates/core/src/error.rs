use thiserror::Error;

/// Errors raised by the geometry, set, classifier and tester layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("radius {radius:e} is below the representability floor {floor:e} at this center")]
    DegenerateRadius { radius: f64, floor: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point is not covered by any classification set")]
    UndefinedPoint,

    #[error("point lies in both `{first}` and `{second}`")]
    PartitionViolation { first: String, second: String },

    #[error("operation not supported: {0}")]
    NotSupported(String),

    #[error("set `{0}` has no members")]
    EmptySet(String),

    #[error("invalid probe: {0}")]
    InvalidProbe(String),

    #[error("precondition not met: {0}")]
    Precondition(String),

    #[error("external classifier: {0}")]
    External(String),

    /// Problems found while reading a scenario, each prefixed with its location.
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Schema(Vec<String>),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
