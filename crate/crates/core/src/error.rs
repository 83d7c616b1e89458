use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("series `{id}` has {len} observations, at least 2 are required")]
    InsufficientData { id: String, len: usize },

    #[error("lag {lag} out of range for a series of length {len}")]
    LagOutOfRange { lag: usize, len: usize },

    #[error("series `{id}` has {len} observations, window size {window} needs more than {window}")]
    SeriesTooShort { id: String, len: usize, window: usize },

    #[error("series `{id}` has zero variance")]
    DegenerateSeries { id: String },

    #[error("series `{id}` contains a non-finite value at position {pos}")]
    NonFinite { id: String, pos: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("argument outside function domain: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("group {group} became empty (total weight {weight:e}); restart with a different seed or fewer groups")]
    EmptyCluster { group: usize, weight: f64 },

    #[error("all {restarts} restarts failed; last error: {last}")]
    AllRestartsFailed { restarts: usize, last: Box<Error> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
}

/// Coarse failure classes, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Validation,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::NotPositiveDefinite(_)
            | Error::Numerical(_)
            | Error::EmptyCluster { .. }
            | Error::AllRestartsFailed { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Validation,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Io => 2,
            ErrorKind::Validation => 3,
            ErrorKind::Numerical => 4,
        }
    }
}
