use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("ill-posed grid: {0}")]
    IllPosedGrid(String),

    #[error("pilot generation failed: {0}")]
    PilotGeneration(String),

    #[error("invalid beamformer: {0}")]
    InvalidBeamformer(String),

    #[error("degenerate estimate: {0}")]
    DegenerateEstimate(String),

    #[error("solver diverged: {0}")]
    Divergence(String),

    #[error("unsupported config: {0}")]
    UnsupportedConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl Error {
    /// Whether the error stems from the scenario definition rather than from running it.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_) | Error::UnsupportedConfig(_) | Error::IllPosedGrid(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
