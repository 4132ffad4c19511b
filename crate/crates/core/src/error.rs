//! Error type shared by every module.

use thiserror::Error;

/// Failure modes of the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("algebra `{0}` has no matrix realization")]
    UnsupportedRealization(String),

    #[error("group element rejected: {0}")]
    Membership(String),

    #[error("outside the domain of the map: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("singular linear system: {0}")]
    LinearSolve(String),

    #[error("singular fiber hessian: {0}")]
    SingularHessian(String),

    #[error("finite-difference tolerance problem: {0}")]
    Tolerance(String),

    #[error("operation not supported for map `{0}`")]
    UnsupportedMap(String),
}

pub type Result<T> = std::result::Result<T, GeoError>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(GeoError::Dimension { expected, found })
    }
}
