use std::path::PathBuf;

use thiserror::Error;

use crate::matching::Matching;
use crate::model::DroneId;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Two drones share a position, or a distance is non-positive.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid demand {0} bps: demand must be positive")]
    InvalidDemand(f64),

    /// A market or scenario could not be assembled from its inputs.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// One or more invariants were violated. Every violation is listed.
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("unknown drone id {0}")]
    UnknownDrone(DroneId),

    /// Local search did not settle within its iteration cap. Carries the
    /// best matching seen so far.
    #[error("engine did not converge within {cap} iterations")]
    TerminationCap { cap: usize, best: Box<Matching> },

    #[error("instance too large for exhaustive search: {size} assignments exceed cap {cap}")]
    InstanceTooLarge { size: u128, cap: u128 },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Wraps an error with the scenario it came from.
    #[error("scenario '{scenario}': {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(vec![msg.into()])
    }

    pub fn in_scenario(self, name: &str) -> Self {
        Error::Scenario {
            scenario: name.to_string(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping scenario context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Scenario { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
