use thiserror::Error;

/// Errors raised by the model, the inference backends and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the support of the distribution or operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inputs disagree with each other (missing labels, uncovered labelers, ...).
    #[error("consistency error: {0}")]
    Consistency(String),
    /// Structural violation of a domain type invariant.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Malformed delimited text file.
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
    /// A gradient or density evaluated to NaN or infinity.
    #[error("non-finite value in factor {factor}: {detail}")]
    NonFinite { factor: String, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn consistency(msg: impl Into<String>) -> Self {
        Error::Consistency(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
