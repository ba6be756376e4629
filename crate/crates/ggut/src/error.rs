//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the embedding loop, solvers and I/O paths.
#[derive(Error, Debug)]
pub enum GgutError {
    #[error("matrix is not Hermitian (max asymmetry {max_dev:.3e})")]
    NotHermitian { max_dev: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("rho(1-rho) is singular: eigenvalue {eigenvalue:.3e} within 1e-12 of {{0,1}}")]
    SingularDensity { eigenvalue: f64 },

    #[error("ghost count must be odd, got {0}")]
    EvenGhostCount(usize),

    #[error("self-consistent loop did not converge after {iterations} iterations (last residuals: omega {residual_omega:.3e}, lambda {residual_lambda:.3e}, trace {residual_trace:.3e})")]
    NonConvergence {
        iterations: usize,
        residual_omega: f64,
        residual_lambda: f64,
        residual_trace: f64,
    },

    #[error("eigensolver did not converge after {iterations} iterations (best residual {residual:.3e})")]
    EigensolverNonConvergence { iterations: usize, residual: f64 },

    #[error("all samples were rejected by symmetry post-selection")]
    EmptyBasis,

    #[error("curve fit did not converge after {0} steps")]
    FitNonConvergence(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GgutError>;
