use std::path::PathBuf;

use thiserror::Error;

use crate::matrix::{ServiceId, UserId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: duplicate entry for user {user}, service {service}")]
    DuplicateKey {
        line: u64,
        user: UserId,
        service: ServiceId,
    },

    #[error("line {line}: non-finite QoS value {value}")]
    NonFiniteValue { line: u64, value: f64 },

    #[error("unknown user {0}")]
    UnknownUser(UserId),

    #[error("unknown service {0}")]
    UnknownService(ServiceId),

    #[error("invalid argument: {0}")]
    Domain(String),

    #[error("no VM could be placed; unplaceable VMs: {unplaced:?}")]
    Allocation { unplaced: Vec<usize> },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Process exit code for the CLI: 1 usage/config, 2 data, 3 allocation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 1,
            Error::Allocation { .. } => 3,
            _ => 2,
        }
    }
}
