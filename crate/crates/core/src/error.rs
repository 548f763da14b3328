use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors surfaced by the simulation and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("model `{model}` does not support {operation}")]
    UnsupportedModel { model: String, operation: &'static str },

    #[error("station {station} stream is not time-ordered at event {index}")]
    StreamOrder { station: char, index: usize },

    #[error("correlation undefined: no records for setting pair")]
    UndefinedCorrelation,

    #[error("incomplete settings: no records for pair ({alpha:.6}, {beta:.6})")]
    IncompleteSettings { alpha: f64, beta: f64 },

    #[error("time average undefined: no outcomes for the requested setting in window")]
    UndefinedAverage,

    #[error("{test}: sequence too short ({got} bits, need {needed})")]
    InsufficientLength {
        test: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("no data: {0}")]
    NoData(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("integrity error at byte offset {offset}: {message}")]
    Integrity { offset: u64, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user configuration rather than bad data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::UnsupportedModel { .. })
    }
}
