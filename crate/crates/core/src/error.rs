use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    /// Power iteration hit its iteration cap. Carries the last estimate.
    #[error("no convergence after {iterations} iterations (last estimate {last_estimate})")]
    NotConverged {
        iterations: usize,
        last_estimate: f64,
    },

    /// A numerical guard tripped: Taylor order cap, renormalization drift,
    /// post-selection iteration cap.
    #[error("numerical diagnostic: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
