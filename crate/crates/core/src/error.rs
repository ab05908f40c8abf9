use thiserror::Error;

use crate::model::ConvergenceTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid feature set: {0}")]
    InvalidFeatureSet(String),

    #[error("invalid codebook: {0}")]
    InvalidCodebook(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("labels required: {0}")]
    MissingLabels(String),

    #[error("undefined contrast: point {point} coincides with center {center}")]
    UndefinedContrast { point: usize, center: usize },

    #[error("diverged at iteration {}: {}", .0.iteration, .0.reason)]
    Diverged(Box<Divergence>),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Diagnostics attached to a diverged run. The trace is converted to `f64`
/// so the error type stays independent of the scalar type.
#[derive(Debug, Clone)]
pub struct Divergence {
    pub iteration: u64,
    pub reason: String,
    pub trace: ConvergenceTrace<f64>,
}

/// Decoding failures for the on-disk formats. Offsets are byte offsets from
/// the start of the file (binary formats) or 1-based line numbers (text).
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic at byte 0: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("truncated file at byte {offset}: expected {expected} bytes, found {actual}")]
    Truncated {
        offset: u64,
        expected: u64,
        actual: u64,
    },

    #[error("label {label} at byte {offset} outside [0, {class_count}) and not -1")]
    LabelOutOfRange {
        offset: u64,
        label: i64,
        class_count: u32,
    },

    #[error("non-finite value at byte {offset}")]
    NonFinite { offset: u64 },

    #[error("trailing data at byte {offset}: {extra} unexpected bytes")]
    TrailingData { offset: u64, extra: u64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid header: {0}")]
    Header(String),
}
