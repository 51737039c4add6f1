use thiserror::Error;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent configuration (instances, datasets, flags).
    #[error("configuration error: {0}")]
    Config(String),

    /// An input exceeds a fixed model or solver capacity.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// An exact oracle refused an instance because it is too large.
    #[error("oracle size error: {0}")]
    OracleSize(String),

    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),

    #[error("horizon error: {0}")]
    Horizon(String),

    #[error("linear program error: {0}")]
    Lp(String),

    /// An internal identity that must hold by construction was violated.
    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("gap undefined: {0}")]
    GapUndefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::Capacity(_) | Error::OracleSize(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
