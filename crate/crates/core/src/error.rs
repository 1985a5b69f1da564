use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the forecasting, conversion and verification chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt payload: expected {expected} bytes, found {found}")]
    Corruption { expected: usize, found: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("point (lon {lon}, lat {lat}) lies outside the grid domain")]
    OutOfDomain { lon: f64, lat: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("data quality: {0}")]
    DataQuality(String),

    #[error("field of {rows}x{cols} pixels is too small for {levels} cascade levels")]
    TooSmall { rows: usize, cols: usize, levels: usize },

    #[error("no sunrise/sunset at lat {lat}, lon {lon} on {date}")]
    PolarCondition { lat: f64, lon: f64, date: chrono::NaiveDate },

    #[error("prediction interval undefined for an ensemble of {0} member(s)")]
    UndefinedInterval(usize),

    #[error("mixed ensemble sizes: expected {expected} members, found {found}")]
    MixedEnsemble { expected: usize, found: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("training failed: {0}")]
    Training(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
