//! Error types shared across the crate.

use thiserror::Error;

/// Errors from the dense linear algebra routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },

    #[error(
        "dimension mismatch: {context} ({left_rows}x{left_cols} vs {right_rows}x{right_cols})"
    )]
    DimensionMismatch {
        context: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
}

/// Errors from flow iterations and the application-level runs.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "dimension mismatch: field produces {field_dim} components, parameters have {param_dim}"
    )]
    FieldDimensionMismatch { field_dim: usize, param_dim: usize },

    #[error("vector field produced a non-finite value at theta = {theta:?}")]
    NonFiniteField { theta: Vec<f64> },

    #[error("parameters became non-finite at iteration {iteration}")]
    NonFiniteParams { iteration: usize },

    #[error(
        "step failed at iteration {iteration}: n* = {nstar:.4} stayed below the floor {nstar_min} \
         after {retries} retries (alpha reduced to {alpha:.4e})"
    )]
    StepFailed {
        iteration: usize,
        retries: usize,
        nstar: f64,
        nstar_min: f64,
        alpha: f64,
    },

    #[error(
        "alpha underflowed to zero at iteration {iteration}; no further step is representable"
    )]
    AlphaUnderflow { iteration: usize },

    #[error("cost became non-finite at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
