use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("convention mismatch: expected v0 = {expected}, state uses v0 = {found}")]
    ConventionMismatch { expected: f64, found: f64 },

    #[error("singular input: {0}")]
    Singular(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the CLI: 2 for bad input, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Singular(_) | Error::Numerical(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
