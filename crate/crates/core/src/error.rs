use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("graph sequence failed the {window}-window connectivity check after {attempts} draws")]
    NotConnected { window: usize, attempts: usize },

    #[error("decay fit failed: {0}")]
    DecayFit(String),

    #[error("series diverges: {0}")]
    Divergent(String),

    #[error("push-sum weight y[{agent}] = {value:e} at round {round} is not safely positive")]
    NonPositiveWeight { agent: usize, round: usize, value: f64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
