use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Unauthorized(String),
    /// A stale or foreign question token.
    #[error("{0}")]
    Rejected(String),
    #[error("campaign is closed")]
    Closed,
    #[error("corrupt event log: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Data(#[from] yn_crowd::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
