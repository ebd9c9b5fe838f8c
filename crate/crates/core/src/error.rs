//! Error type shared by every module of the crate.
//!
//! All positional indices carried by errors are 1-based, matching the way the
//! formulas are documented throughout the crate.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is singular (pivot {pivot:e} at step {step})")]
    SingularMatrix { step: usize, pivot: f64 },

    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("matrix is not symmetric (max asymmetry {residual:e})")]
    NotSymmetric { residual: f64 },

    #[error("leading minor {index} is singular (alpha = {alpha:e})")]
    SingularLeadingMinor { index: usize, alpha: f64 },

    #[error("zero diagonal entry at index {index}")]
    ZeroDiagonal { index: usize },

    #[error("matrix is not of generator form: entry ({row},{col}) deviates by {residual:e}")]
    NotGeneratorForm { row: usize, col: usize, residual: f64 },

    #[error("local block K_m[{index}] is singular")]
    SingularLocalBlock { index: usize },

    #[error("diagonal block K_{index}{index} is singular")]
    SingularDiagonalBlock { index: usize },

    #[error("Schur block A_{index} is singular")]
    SingularSchurBlock { index: usize },

    #[error("invalid sampling grid: {0}")]
    InvalidGrid(String),

    #[error("zero variance at grid point {index}")]
    ZeroVariance { index: usize },

    #[error("design matrix is rank deficient (pivot ratio {ratio:e})")]
    RankDeficientDesign { ratio: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
