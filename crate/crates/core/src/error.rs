use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite integrand value at node {node}")]
    NonFiniteIntegrand { node: f64 },

    #[error("singular integrand at ({x}, {y}): {what} vanishes")]
    SingularIntegrand { x: f64, y: f64, what: &'static str },

    #[error("diffusion matrix not positive definite at ({x}, {y}): effective diffusion {value}")]
    NotPositiveDefinite { x: f64, y: f64, value: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in stage {stage} of step {step} (t = {time})")]
    Divergence { step: usize, stage: usize, time: f64 },

    #[error("linear solver did not converge after {iterations} sweeps (residual {residual:e})")]
    SolverNonConvergence { iterations: usize, residual: f64 },

    #[error("matrix is not strictly diagonally dominant at row {row}; reduce the time step")]
    NotDiagonallyDominant { row: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
