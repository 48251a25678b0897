//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("{op}: operand shapes do not conform: {lhs:?} vs {rhs:?}")]
    ShapeMismatch { op: String, lhs: Vec<usize>, rhs: Vec<usize> },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("degenerate projection: point depth {depth:e} is below 1e-9")]
    DegenerateProjection { depth: f64 },

    #[error("degenerate camera pair: baseline {baseline:e} is below 1e-9")]
    DegeneratePair { baseline: f64 },

    #[error("degenerate frame landmarks: triangle area {area:e} is below 1e-9")]
    DegenerateFrame { area: f64 },

    #[error("invalid camera parameters: {reason}")]
    InvalidCamera { reason: String },

    #[error("invalid skeleton: {reason}")]
    InvalidSkeleton { reason: String },

    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("landmark count mismatch: expected {expected}, got {got}")]
    LandmarkCountMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("empty input: {context}")]
    EmptyInput { context: String },

    #[error("dataset error: {reason}")]
    Dataset { reason: String },

    #[error("checkpoint error: {reason}")]
    Checkpoint { reason: String },

    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersion { expected: u32, found: u32 },

    #[error("training aborted at step {step}: {reason}")]
    TrainingAborted { step: usize, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
