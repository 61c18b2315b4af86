//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("degenerate spectrum")]
    DegenerateSpectrum,

    #[error("not PSD: eigenvalue {eigenvalue:.3e} below -1e-9")]
    NotPsd { eigenvalue: f64 },

    #[error("matrix not symmetric: max asymmetry {max_asymmetry:.3e}")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("enumeration too large: {units} binary units exceeds the limit of 20")]
    EnumerationTooLarge { units: usize },

    #[error("sampler diverged at step {step}: score norm {score_norm:.3e}")]
    SamplerDiverged {
        step: usize,
        score_norm: f64,
        nu_history: Vec<f64>,
    },

    #[error("ratio overflow: log-ratio {log_ratio:.3e} at point {point:?}")]
    RatioOverflow { log_ratio: f64, point: Vec<f64> },

    #[error("noise model must be frozen")]
    NoiseNotFrozen,

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("grid covers only {coverage:.6} of target mass, {required} required")]
    InsufficientCoverage { coverage: f64, required: f64 },

    #[error("checkpoint format: {0}")]
    CheckpointFormat(String),

    #[error("verification failed: {0}")]
    VerificationFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 usage/schema/IO, 2 sampler divergence,
    /// 3 verification failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SamplerDiverged { .. } => 2,
            Error::VerificationFailed(_) => 3,
            _ => 1,
        }
    }
}
