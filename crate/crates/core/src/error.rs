use thiserror::Error;

use crate::relativity::ExperimentClass;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid velocity {velocity} m/s: |v| must be below c = {c} m/s", c = crate::relativity::SPEED_OF_LIGHT)]
    InvalidVelocity { velocity: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("unsupported configuration: no prediction is defined for experiment class {class}")]
    UnsupportedConfiguration { class: ExperimentClass },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("empty counts: at least one trial is required")]
    EmptyCounts,

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("trial {index}: {source}")]
    Trial {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::InvalidVelocity { .. } => "invalid-velocity",
            Error::InvalidState(_) => "invalid-state",
            Error::UnsupportedConfiguration { .. } => "unsupported-configuration",
            Error::DegenerateGeometry(_) => "degenerate-geometry",
            Error::EmptyCounts => "empty-counts",
            Error::InvalidQuery(_) => "invalid-query",
            Error::Infeasible(_) => "infeasible-configuration",
            Error::Config(_) => "config",
            Error::Trial { source, .. } => source.kind(),
            Error::Io(_) => "io",
        }
    }

    /// The innermost error, skipping trial-index wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Trial { source, .. } => source.root(),
            other => other,
        }
    }
}
