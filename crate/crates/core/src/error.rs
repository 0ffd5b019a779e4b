use thiserror::Error;

/// Errors raised by geometry, oracle, schedule and experiment code.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("tangent vector is not based at the requested point")]
    BaseMismatch,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("infeasible schedule period {period}: {reason}")]
    InfeasiblePeriod { period: u32, reason: String },

    #[error("solver did not converge: {0}")]
    Solver(String),

    #[error("calibration failed: {0}")]
    Calibration(String),
}

pub type Result<T> = std::result::Result<T, GeoError>;

pub(crate) fn contract(msg: impl Into<String>) -> GeoError {
    GeoError::Contract(msg.into())
}

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(contract(format!(
            "{name} must be positive and finite, got {value}"
        )))
    }
}
