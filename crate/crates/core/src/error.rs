use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
///
/// Invariant violations that are part of a measurement (for example the
/// normalization defect of a tensor under inspection) are reported as data,
/// not through this type.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: expected {expected} entries, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("state count must be at least 2, got {0}")]
    StateCount(usize),

    #[error("dimension mismatch: {left} vs {right}")]
    Dimension { left: usize, right: usize },

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("invalid tensor: {0}")]
    Tensor(String),

    #[error("time gap violated: {0}")]
    Gap(String),

    #[error("parameter `{name}` out of range: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("quadrature truncation: mass defect {defect:.3e} exceeds {limit:.1e}")]
    Truncation { defect: f64, limit: f64 },

    #[error("coefficient `{0}` did not converge")]
    NonConvergent(&'static str),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}
