use thiserror::Error;

#[derive(Debug, Error)]
pub enum D2vError {
    #[error("invalid enrollment counts: randomized {randomized}, discontinued {discontinued}, window {window}")]
    InvalidEnrollment {
        randomized: u32,
        discontinued: u32,
        window: f64,
    },
    #[error("{what} must not be empty")]
    Empty { what: &'static str },
    #[error("normalized rate {0} outside [0,1]")]
    RateOutOfRange(f64),
    #[error("split needs at least {need} trials, corpus has {have}")]
    TooFewTrials { need: usize, have: usize },
    #[error("split ratios {0:?} must be positive and sum to 1 within 1e-9")]
    BadRatios([f64; 3]),
    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("corpus validation failed: {0}")]
    Invalid(String),
    #[error("entities come from different corpora (tags {a:#x} and {b:#x})")]
    CorpusMismatch { a: u64, b: u64 },
    #[error(
        "label calibration failed after {attempts} attempts; achieved distribution {achieved:?} vs target {target:?}"
    )]
    Calibration {
        attempts: usize,
        achieved: [f64; 5],
        target: [f64; 5],
    },
    #[error("degenerate labels: class {0} has no positive/negative split")]
    DegenerateLabels(String),
    #[error("regression target has zero variance")]
    ZeroVariance,
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("transfer filters overlap on trials: {0:?}")]
    FilterOverlap(Vec<String>),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("text embedding error: {0}")]
    Text(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Num(#[from] numcore::NumError),
}

pub type Result<T> = std::result::Result<T, D2vError>;
