use std::path::PathBuf;

use thiserror::Error;

use crate::wire::codec::{DecodeError, EncodeError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Io,
    Data,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("quaternion has zero norm")]
    ZeroQuaternion,
    #[error("quaternion is not unit length (norm {norm})")]
    NonUnitQuaternion { norm: f64 },

    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Encode(#[from] EncodeError),

    #[error("session manifest missing: {0}")]
    MissingManifest(PathBuf),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("column mismatch in {file} at line {line}: {detail}")]
    ColumnMismatch {
        file: String,
        line: u64,
        detail: String,
    },
    #[error("non-monotone time for device {device} at t = {t_s} s")]
    NonMonotoneTime { device: u8, t_s: f64 },

    #[error("invalid script: {0}")]
    InvalidScript(String),
    #[error("not enough stationary data to estimate sensor bias ({found_s:.2} s found, {needed_s:.2} s needed); record a still period")]
    InsufficientStillness { found_s: f64, needed_s: f64 },
    #[error("calibration out of range: {0}")]
    CalibrationOutOfRange(String),
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("insufficient overlap: {0}")]
    InsufficientOverlap(String),
    #[error("window longer than track ({window_s} s > {track_s} s)")]
    WindowTooLong { window_s: f64, track_s: f64 },

    #[error("no annotations for track '{track}' (available: {available:?})")]
    MissingTrack {
        track: String,
        available: Vec<String>,
    },
    #[error("label '{0}' is not in the model vocabulary")]
    UnknownLabel(String),
    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dataset has a single class; at least two are required")]
    SingleClass,
    #[error("dataset is empty: {0}")]
    EmptyDataset(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("network: {0}")]
    Net(#[source] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidScript(_) | Error::InvalidConfig(_) | Error::MissingTrack { .. } => {
                ErrorClass::Usage
            }
            Error::Io { .. } | Error::Net(_) | Error::MissingManifest(_) => ErrorClass::Io,
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => ErrorClass::Io,
            _ => ErrorClass::Data,
        }
    }
}
