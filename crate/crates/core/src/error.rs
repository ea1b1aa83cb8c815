use std::path::PathBuf;

use thiserror::Error;

/// Coarse error category, used by the command line to pick an exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Budget,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error(
        "infeasible episode budget: phase 1 needs {required} episodes but at most {available} \
         may be spent on it; minimum T is {min_total}"
    )]
    Budget {
        required: usize,
        available: usize,
        min_total: usize,
    },

    #[error("degenerate specification: {0}")]
    Degenerate(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Budget { .. } => ErrorCategory::Budget,
            Error::Io { .. } => ErrorCategory::Io,
            _ => ErrorCategory::Config,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
