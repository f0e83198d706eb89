use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A model, domain or control invariant does not hold.
    #[error("{0}")]
    InvalidInput(String),

    #[error("point ({0}, {1}) lies outside the computational domain")]
    OutsideDomain(f64, f64),

    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    #[error("M-matrix violation at row {row}, column {col} (element {element:?}): value {value:e}")]
    MMatrixViolation {
        row: usize,
        col: usize,
        element: Option<usize>,
        value: f64,
    },

    #[error("linear solve failed at time index {step}: residual {residual:e}")]
    LinearSolve { step: usize, residual: f64 },

    #[error("Howard iteration did not converge at time index {step} after {iterations} iterations (residual {residual:e})")]
    HowardNonConvergence {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("time {0} is not part of the solved trajectory")]
    TimeNotFound(f64),

    #[error("quadrature did not converge: estimated error {0:e}")]
    Quadrature(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
