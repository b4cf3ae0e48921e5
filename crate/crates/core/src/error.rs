use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The array cannot observe all nine entries of the gyroscopic matrix.
    #[error("geometry is not observable (rank {rank} < 9); offending sensors {sensors:?}")]
    Unobservable { rank: usize, sensors: Vec<usize> },

    /// Triple product of the three offsets is below the degeneracy threshold.
    #[error("degenerate sensor triad: |triple product| = {triple:e} below threshold {threshold:e}")]
    DegenerateGeometry { triple: f64, threshold: f64 },

    #[error("operation requires exactly 3 offset sensors, array has {0}")]
    WrongSensorCount(usize),

    #[error("operation requires equal noise levels on every sensor")]
    HeterogeneousNoise,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("draw {draw}: {source}")]
    Draw {
        draw: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Unobservable { .. } => "unobservable",
            Error::DegenerateGeometry { .. } => "degenerate_geometry",
            Error::WrongSensorCount(_) => "wrong_sensor_count",
            Error::HeterogeneousNoise => "heterogeneous_noise",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidInput(_) => "invalid_input",
            Error::Config { .. } => "config",
            Error::Draw { source, .. } => source.kind(),
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
