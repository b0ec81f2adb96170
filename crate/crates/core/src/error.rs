//! Error type shared across the toolkit.

use std::path::PathBuf;

/// Errors produced by loading, preprocessing, detection, thresholding and
/// benchmark orchestration.
#[derive(Debug, thiserror::Error)]
pub enum MtadError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {file} at line {line}, column {column}: {message}")]
    Parse {
        file: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid label in {file} at line {line}: expected 0 or 1, got {value}")]
    InvalidLabel {
        file: PathBuf,
        line: usize,
        value: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {file} at line {line}, column {column}")]
    NonFinite {
        file: PathBuf,
        line: usize,
        column: usize,
    },

    #[error("no informative KPIs: every column is constant on the train split")]
    NoInformativeKpis,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("degenerate labels: need at least one anomalous and one normal point")]
    DegenerateLabels,

    #[error("insufficient tail data: fewer than {required} excesses even at init quantile {quantile}")]
    InsufficientTailData { required: usize, quantile: f64 },

    #[error("constant scores: threshold is undefined on an all-equal series")]
    ConstantScores,

    #[error("prediction vector was already point-adjusted")]
    DoubleAdjustment,

    #[error("nested timed phase: a timing measurement is already in flight on this thread")]
    NestedTiming,

    #[error("config error: {0}")]
    Config(String),

    #[error("benchmark error: {0}")]
    Bench(String),
}

impl MtadError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MtadError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, MtadError>;
