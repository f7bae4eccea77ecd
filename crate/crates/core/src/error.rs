use std::fmt;

/// Crate-wide error type.
#[derive(Debug)]
pub enum Error {
    /// Invalid problem or run configuration; the message names the offending
    /// field and the expected constraint.
    Config(String),
    /// A solver iterate became non-finite. Reports which field broke and at
    /// which iteration.
    Diverged { field: &'static str, iteration: u64 },
    /// Output or input artifact failure.
    Io(std::io::Error),
    /// JSON (de)serialization failure.
    Json(serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Diverged { field, iteration } => {
                write!(f, "iterate '{field}' became non-finite at iteration {iteration}")
            }
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}
