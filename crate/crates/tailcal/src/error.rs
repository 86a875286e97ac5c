//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by dataset ingestion, statistics fitting, transfer,
/// calibration, and theory checks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: bad file format: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {matrix} at row {row}")]
    NonFinite { matrix: &'static str, row: usize },

    #[error("label {label} at row {row} is out of range for {classes} classes")]
    LabelOutOfRange {
        row: usize,
        label: u32,
        classes: usize,
    },

    #[error("head set is empty at threshold zeta={zeta}; lower zeta so at least one class qualifies as head")]
    EmptyHead { zeta: u64 },

    #[error("class {class} has no samples")]
    EmptyClass { class: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("class {class} present in data but missing from fitted statistics")]
    MissingClassStats { class: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("second-moment density ratio diverges in dimension {dim} (2*var_p - var_q <= 0)")]
    DivergentRatio { dim: usize },

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),
}

pub type Result<T> = std::result::Result<T, Error>;
