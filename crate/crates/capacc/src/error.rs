/// Errors of file handling, simulation and the command line, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error("I/O: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
    #[error("numeric: {0}")]
    Numeric(String),
    #[error("{0}")]
    NonConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// 1 usage, 2 input (parse or I/O), 3 numeric, 4 non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Io(_) | Error::Parse(_) => 2,
            Error::Numeric(_) => 3,
            Error::NonConvergence(_) => 4,
        }
    }
}

impl From<capacc_core::Error> for Error {
    fn from(e: capacc_core::Error) -> Self {
        use capacc_core::Error as E;
        match e {
            E::InvalidArgument(_) => Error::Usage(e.to_string()),
            E::NonConvergence { .. } => Error::NonConvergence(e.to_string()),
            E::NotPositiveDefinite(_) | E::Numeric(_) | E::UndefinedCorrelation(_) => {
                Error::Numeric(e.to_string())
            }
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            Error::Io(e.to_string())
        } else {
            Error::Parse(e.to_string())
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
