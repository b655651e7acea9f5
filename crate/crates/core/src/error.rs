use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by model construction, solvers and instance I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("network is not connected: bus {0} is unreachable from the slack bus")]
    Disconnected(usize),

    #[error("branch {branch}: {reason}")]
    DegenerateBranch { branch: usize, reason: String },

    #[error("outage of branch {0} islands the network (self-PTDF within 1e-9 of one)")]
    Islanding(usize),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl Error {
    /// Process exit status used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Singular(_) | Error::Solver(_) => 3,
            _ => 2,
        }
    }
}
