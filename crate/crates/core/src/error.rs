use thiserror::Error;

use crate::dependence::ThetaParams;

/// Errors raised by model construction, evaluation, estimation and I/O.
#[derive(Debug, Error)]
pub enum CrmError {
    #[error("frequency vector must contain at least one year")]
    EmptyFrequencyVector,

    #[error("inadmissible dependence parameters {0:?}: need theta1^2+theta3^2<1 and theta2^2+theta4^2<1")]
    Inadmissible(ThetaParams),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("policy {policy_id}: {message}")]
    InconsistentHistory { policy_id: String, message: String },

    #[error("instance exceeds oracle size cap (tau <= {max_years}, total claims <= {max_claims})")]
    SizeCap { max_years: usize, max_claims: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-finite log-likelihood contribution from policy {policy_id}")]
    NonFinite { policy_id: String },

    #[error("severity parameters are not identifiable: no positive claim counts in the data")]
    Unidentifiable,

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NonConvergence { iterations: usize, gradient_norm: f64 },

    #[error("{file}:{row}: {message}")]
    Data { file: String, row: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CrmError {
    /// True for failures of numerical evaluation or optimization, as opposed
    /// to malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            CrmError::NonFinite { .. } | CrmError::NonConvergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, CrmError>;
