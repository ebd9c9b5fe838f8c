//! Compact representation, expansion and structured inversion of matrices
//! whose inverses are tridiagonal, banded or block-tridiagonal.
//!
//! These are exactly the covariance matrices of simple, m-connected and
//! vector wide-sense Markov processes sampled on an ordered grid. The crate
//! provides:
//!
//! * [`scalar`]: the tridiagonal-inverse class, `O(n)` inversion, determinant,
//!   class-membership test and the bordering recursion;
//! * [`banded`]: symmetric m-connected covariances, their band inverses and
//!   the in-band storage count;
//! * [`block`]: vector Markov covariances, block-tridiagonal inversion with
//!   multiplication accounting, and the memory/operation models;
//! * [`kernels`]: covariance functions on sampling grids, Markov property
//!   checks, the coupled 2D example process and Gaussian path sampling;
//! * [`blue`]: generalized least squares driven by the structured inverses;
//! * [`dense`]: the dense reference oracle;
//! * [`document`]: the JSON interchange documents.

pub mod banded;
pub mod block;
pub mod blue;
pub mod dense;
pub mod document;
pub mod error;
pub mod kernels;
pub mod scalar;

pub use dense::DenseMatrix;
pub use error::{Error, Result};

/// Outcome of a class-membership test: whether the structural identity holds
/// and where the largest deviation sits (1-based, scalar entry or block index).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StructureReport {
    pub holds: bool,
    pub worst_row: usize,
    pub worst_col: usize,
    pub worst_residual: f64,
    pub threshold: f64,
}

impl StructureReport {
    pub(crate) fn new(threshold: f64) -> Self {
        Self { holds: true, worst_row: 0, worst_col: 0, worst_residual: 0.0, threshold }
    }

    pub(crate) fn record(&mut self, row: usize, col: usize, residual: f64) {
        if residual > self.worst_residual {
            self.worst_row = row;
            self.worst_col = col;
            self.worst_residual = residual;
        }
        if residual > self.threshold {
            self.holds = false;
        }
    }
}

/// Determinant of a structured matrix as a product of Schur pivot
/// determinants, with every leading-corner determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterminantReport {
    pub determinant: f64,
    pub leading_minors: Vec<f64>,
}

impl DeterminantReport {
    pub(crate) fn from_factors(factors: impl IntoIterator<Item = f64>) -> Self {
        let leading_minors: Vec<f64> = factors
            .into_iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        let determinant = leading_minors.last().copied().unwrap_or(1.0);
        Self { determinant, leading_minors }
    }
}
