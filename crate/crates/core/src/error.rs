//! Crate-wide error type.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum MatError {
    #[error("shape mismatch: expected {expected:?}, got {got:?} ({context})")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
        context: String,
    },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("loss is not a scalar (shape {0:?})")]
    NonScalarLoss(Vec<usize>),

    #[error("graph already consumed by backward")]
    GraphConsumed,

    #[error("unknown parameter {0}")]
    UnknownParameter(String),

    #[error("missing gradient for unfrozen parameter {0}")]
    MissingGradient(String),

    #[error("function is not deterministic: repeated evaluation differs ({0})")]
    NonDeterministic(String),

    #[error("training diverged at step {step}: {what}")]
    Divergence { step: usize, what: String },

    #[error("no centered crop satisfies coverage >= {min_coverage}")]
    CoverageUnsatisfiable { min_coverage: f32 },

    #[error("unknown generator id {0:?}")]
    UnknownGenerator(String),

    #[error("unknown caption tag {0:?}")]
    UnknownTag(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error("manifest verification failed: {0}")]
    VerifyMismatch(String),

    #[error("misaligned prediction/reference sets: {0}")]
    Misaligned(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, MatError>;

impl MatError {
    pub fn shape(expected: &[usize], got: &[usize], context: impl Into<String>) -> Self {
        MatError::ShapeMismatch {
            expected: expected.to_vec(),
            got: got.to_vec(),
            context: context.into(),
        }
    }
}
