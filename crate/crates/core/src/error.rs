use thiserror::Error;

/// Errors raised by the policy, model and experiment layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BanditError {
    #[error("need at least 2 arms, got {0}")]
    TooFewArms(usize),
    #[error("arm {arm} out of range for {arm_count} arms")]
    ArmOutOfRange { arm: usize, arm_count: usize },
    #[error("loss vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("{what} must lie in [0, 1], got {value}")]
    OutOfUnitInterval { what: &'static str, value: f64 },
    #[error("{what} must be in (0, 1], got {value}")]
    InvalidProbability { what: &'static str, value: f64 },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("update does not match the last selection: {0}")]
    StaleSelection(String),
}

pub type Result<T> = std::result::Result<T, BanditError>;

pub(crate) fn check_unit(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(BanditError::OutOfUnitInterval { what, value })
    }
}

pub(crate) fn check_arm(arm: usize, arm_count: usize) -> Result<usize> {
    if arm < arm_count {
        Ok(arm)
    } else {
        Err(BanditError::ArmOutOfRange { arm, arm_count })
    }
}
