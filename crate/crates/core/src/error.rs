use thiserror::Error;

/// Errors raised by the numeric pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("root is not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    /// Decoy statistics are inconsistent with the photon-number model.
    #[error("decoy bound violation: {0}")]
    BoundViolation(String),

    #[error("state is not positive semidefinite: alpha = {alpha} exceeds |cos(theta) sin(theta)| = {limit}")]
    Positivity { alpha: f64, limit: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("inconsistent counts: {0}")]
    Consistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        field,
        reason: reason.into(),
    }
}
