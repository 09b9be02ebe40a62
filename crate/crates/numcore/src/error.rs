use thiserror::Error;

/// Errors raised by tensor construction, tape operations, the optimizer,
/// and the finite-difference checker. Shape and contract problems are
/// reported eagerly at the offending call, never deferred to backward.
#[derive(Debug, Error)]
pub enum NumError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },

    #[error("{op}: contract violation: {detail}")]
    Contract { op: &'static str, detail: String },

    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("backward requires a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },

    #[error("backward already ran on this tape")]
    DoubleBackward,

    #[error("parameter {name:?} has no gradient; run backward first")]
    MissingGrad { name: String },

    #[error("parameter {name:?} registered twice")]
    DuplicateParam { name: String },

    #[error("optimizer state does not match parameter set: {detail}")]
    StateMismatch { detail: String },

    #[error("finite-difference epsilon {value} outside [1e-7, 1e-3]")]
    EpsilonOutOfRange { value: f64 },

    #[error("function under test is not deterministic: two evaluations disagree")]
    NondeterministicFunction,
}
