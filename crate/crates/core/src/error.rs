use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("activation cache does not match the parameters: {0}")]
    Cache(String),

    #[error("label {label} out of range for {classes} classes (row {row})")]
    Label {
        row: usize,
        label: usize,
        classes: usize,
    },

    #[error("invalid scale r={r} for sequence of {frames} frames")]
    Scale { r: usize, frames: usize },

    #[error("clip frame index {index} out of range for {frames} frames")]
    Index { index: usize, frames: usize },

    #[error("weights must sum to 1, got {sum}")]
    Normalization { sum: f64 },

    #[error("at least 2 classes are required, got {0}")]
    DegenerateClasses(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty batch: {0}")]
    Batch(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("class `{class}` has no videos in domain `{domain}`")]
    Completeness { class: String, domain: String },

    #[error("incompatible checkpoint: {0}")]
    Compatibility(String),

    #[error("training diverged at epoch {epoch}, step {step}: non-finite loss")]
    Divergence { epoch: usize, step: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
