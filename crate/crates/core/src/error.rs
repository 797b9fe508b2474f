use thiserror::Error;

/// Errors raised by the pool mathematics (curve, rebate and allocation layers).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MathError {
    #[error("reserves must be positive and finite, got ({x}, {y})")]
    Domain { x: f64, y: f64 },

    #[error("price must be positive and finite, got {0}")]
    InvalidPrice(f64),

    #[error("reserve points lie on different invariant levels ({before} vs {after})")]
    Inconsistent { before: f64, after: f64 },

    #[error("parameter `{name}` out of range: {value}")]
    Parameter { name: &'static str, value: f64 },

    #[error("insufficient {what}: need {need}, have {have}")]
    Funding {
        what: &'static str,
        need: f64,
        have: f64,
    },

    #[error("settlement overdraws allocation pool: {0}")]
    Solvency(String),
}

pub type MathResult<T> = Result<T, MathError>;
