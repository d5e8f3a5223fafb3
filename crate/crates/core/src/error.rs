use thiserror::Error;

use crate::mechanisms::MechanismKind;

/// Errors raised by the numeric core: parameter validation and solver checks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LdpError {
    #[error("privacy budget must be finite and positive, got {0}")]
    InvalidBudget(f64),

    #[error("input {0} lies outside [-1, 1]")]
    InputOutOfRange(f64),

    #[error("shape parameter t must be finite and positive, got {0}")]
    InvalidShape(f64),

    #[error("value {value} lies outside the grid range [-{half_range}, {half_range}]")]
    OutsideGrid { value: f64, half_range: f64 },

    #[error("invalid grid: half range {half_range}, resolution {m}")]
    InvalidGrid { half_range: f64, m: u32 },

    #[error("{0} has no bounded continuous output to discretize")]
    NotDiscretizable(MechanismKind),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("solver inconsistency: {0}")]
    SolverInconsistency(String),
}

pub type Result<T, E = LdpError> = std::result::Result<T, E>;

pub(crate) fn check_unit(x: f64) -> Result<f64> {
    if x.is_finite() && x.abs() <= 1.0 {
        Ok(x)
    } else {
        Err(LdpError::InputOutOfRange(x))
    }
}
