use thiserror::Error;

use crate::mpp::MppResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the admissible range of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("covariance factorization failed: {0}")]
    Factorization(String),

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("simulation produced a non-finite state at step {step} (t = {time})")]
    Diverged { step: usize, time: f64 },

    #[error("no hits: {0}")]
    NoHits(String),

    /// Armijo backtracking exhausted its shrink budget. The best iterate
    /// found so far is carried along.
    #[error("line search failed after {shrinks} shrinks (best J = {})", best.j)]
    LineSearch {
        shrinks: usize,
        best: Box<MppResult>,
    },

    #[error("usage: {0}")]
    Usage(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end: 2 for usage and
    /// validation problems, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Usage(_) | Error::Parse(_) => 2,
            _ => 1,
        }
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
