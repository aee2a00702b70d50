use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] yn_crowd::Error),
    #[error(transparent)]
    Service(#[from] yn_crowd_service::Error),
    #[error("{0}")]
    Runtime(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 2 for bad input, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        use yn_crowd_service::Error as S;
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(e) | CliError::Service(S::Data(e)) => data_code(e),
            CliError::Service(S::Validation(_) | S::NotFound(_) | S::Corrupt(_)) => 2,
            CliError::Service(_) | CliError::Runtime(_) => 1,
        }
    }
}

fn data_code(e: &yn_crowd::Error) -> i32 {
    match e {
        yn_crowd::Error::Io(_) | yn_crowd::Error::NonFinite { .. } => 1,
        _ => 2,
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(yn_crowd::Error::Io(e))
    }
}
