use alloc::string::String;
use core::fmt;

/// Errors raised by the detection core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a documented precondition.
    InvalidArgument(String),
    /// A matrix that must be positive definite was not.
    NotPositiveDefinite(String),
    /// A numerical routine broke down (singular system, non-finite value, ...).
    Numeric(String),
    /// A correlation was requested for a constant series.
    UndefinedCorrelation(String),
    /// An iterative solver hit its iteration cap.
    NonConvergence {
        /// Largest remaining moment mismatch on the constrained entries.
        max_mismatch: f64,
        /// `tr(S Θ) - p`, zero at the constrained optimum.
        duality_gap: f64,
        /// Sweeps performed.
        sweeps: usize,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::NotPositiveDefinite(m) => write!(f, "matrix is not positive definite: {m}"),
            Error::Numeric(m) => write!(f, "numerical failure: {m}"),
            Error::UndefinedCorrelation(m) => write!(f, "undefined correlation: {m}"),
            Error::NonConvergence {
                max_mismatch,
                duality_gap,
                sweeps,
            } => write!(
                f,
                "no convergence after {sweeps} sweeps (max mismatch {max_mismatch:e}, duality gap {duality_gap:e})"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
