use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HadlError>;

#[derive(Debug, Error)]
pub enum HadlError {
    #[error("odd input length {0}: the Haar transform needs an even length")]
    OddLength(usize),
    #[error("input length {0} is too short (need at least 2)")]
    TooShort(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("operation requires a low-rank head")]
    WrongHead,
    #[error("finite-difference step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("no windows available for {0}")]
    EmptyData(&'static str),
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("missing value at row {row}, column {column}")]
    MissingValue { row: usize, column: String },
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("unknown split convention '{0}'")]
    UnknownConvention(String),
    #[error("channel {0} is constant on the training segment")]
    ConstantChannel(usize),
    #[error("segment of length {len} is shorter than lookback + horizon = {needed}")]
    SegmentTooShort { len: usize, needed: usize },
    #[error("unknown synthetic kind '{0}'")]
    UnknownKind(String),
    #[error("reference MSE is zero; ratio undefined")]
    ZeroBaseline,
    #[error("noise list must contain 0.0 as the clean reference")]
    MissingZeroEta,
    #[error("unknown ablation axis '{0}'")]
    UnknownAxis(String),
    #[error("dataset '{name}' has {found} channels, expected {expected}")]
    ChannelCount {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
