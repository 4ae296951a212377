use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config field `{field}` = {value} is out of range (expected {expected})")]
    ConfigRange {
        field: &'static str,
        value: String,
        expected: &'static str,
    },

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("invalid bounding box ({left}, {top}, {width}, {height})")]
    InvalidBox {
        left: f64,
        top: f64,
        width: f64,
        height: f64,
    },

    #[error("embedding has zero norm")]
    ZeroNorm,

    #[error("embedding contains a non-finite value")]
    NonFiniteEmbedding,

    #[error("cost matrix shape mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("cost entry {value} at ({row}, {col}) outside [0, 1]")]
    CostOutOfRange { row: usize, col: usize, value: f64 },

    #[error("insufficient appearance history: have {have}, need {need}")]
    InsufficientHistory { have: usize, need: usize },

    #[error("cost queue is empty")]
    EmptyCostQueue,

    #[error("innovation covariance is not positive definite")]
    DegenerateCovariance,

    #[error("frame {got} out of order (expected {expected})")]
    FrameOrder { expected: u32, got: u32 },

    #[error("detection for frame {det_frame} passed to step for frame {frame}")]
    DetectionFrame { frame: u32, det_frame: u32 },

    #[error("detection score {0} outside [0, 1]")]
    InvalidScore(f64),

    #[error("embedding rows ({got}) match neither all detections ({total}) nor high-score detections ({high})")]
    EmbeddingRowCount { got: usize, total: usize, high: usize },

    #[error("high-score detection at frame {frame} has no embedding")]
    MissingEmbedding { frame: u32 },

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("event log references unknown track id {0}")]
    UnknownTrack(u64),

    #[error("invalid module toggles: {0}")]
    Toggles(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
