//! Generalized least squares for a linear mean model, `Z = F·B + ξ` with
//! `cov(ξ) = K`, using a structured `K⁻¹`:
//!
//! ```text
//! D = (Fᵀ·K⁻¹·F)⁻¹,   B̂ = D·Fᵀ·K⁻¹·Z
//! ```
//!
//! `F` is stored as an `N`x`p` table (one row per observation), so the
//! products `K⁻¹·F` and `K⁻¹·Z` are `p + 1` structured matrix-vector products.

use serde::{Serialize, Serializer};

use crate::banded::BandedMatrix;
use crate::block::BlockTridiagonalMatrix;
use crate::dense::{dot, DenseMatrix, LuFactor};
use crate::error::{Error, Result};
use crate::scalar::TridiagonalMatrix;

/// Designs whose normal matrix has a pivot ratio at or below this are rejected.
pub const RANK_TOL: f64 = 1e-10;

/// A symmetric precision matrix applied without forming it densely.
pub trait StructuredPrecision {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

impl StructuredPrecision for TridiagonalMatrix {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.mul_vec(x)
    }
}

impl StructuredPrecision for BandedMatrix {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.mul_vec(x)
    }
}

impl StructuredPrecision for BlockTridiagonalMatrix {
    fn dim(&self) -> usize {
        BlockTridiagonalMatrix::dim(self)
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.mul_vec(x)
    }
}

/// Basis values `f_k(t_i)`, one row per observation and one column per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMeanModel {
    basis: DenseMatrix,
}

impl LinearMeanModel {
    /// Rejects tables whose columns are linearly dependent, including `p > n`.
    pub fn new(basis: DenseMatrix) -> Result<Self> {
        let (n, p) = (basis.rows(), basis.cols());
        if p == 0 {
            return Err(Error::DimensionMismatch("the model needs at least one parameter".into()));
        }
        if p > n {
            return Err(Error::RankDeficientDesign { ratio: 0.0 });
        }
        let gram = basis.transpose().matmul(&basis)?;
        pivot_check(&gram)?;
        Ok(Self { basis })
    }

    /// Single unknown constant mean.
    pub fn constant(n: usize) -> Result<Self> {
        Self::new(DenseMatrix::from_fn(n, 1, |_, _| 1.0))
    }

    /// `1, t, …, t^degree`.
    pub fn polynomial(points: &[f64], degree: usize) -> Result<Self> {
        Self::new(DenseMatrix::from_fn(points.len(), degree + 1, |i, k| points[i].powi(k as i32)))
    }

    /// Independent copies of a scalar model for each of `m` components of a
    /// point-major vector process.
    pub fn per_component(scalar: &LinearMeanModel, m: usize) -> Result<Self> {
        let (n, p) = (scalar.basis.rows(), scalar.basis.cols());
        Self::new(DenseMatrix::from_fn(n * m, p * m, |r, c| {
            let (i, comp) = (r / m, r % m);
            if c / p == comp {
                scalar.basis[(i, c % p)]
            } else {
                0.0
            }
        }))
    }

    pub fn basis(&self) -> &DenseMatrix {
        &self.basis
    }

    pub fn observations(&self) -> usize {
        self.basis.rows()
    }

    pub fn parameters(&self) -> usize {
        self.basis.cols()
    }
}

fn pivot_check(gram: &DenseMatrix) -> Result<LuFactor> {
    let lu = LuFactor::new(gram, 0.0).map_err(|_| Error::RankDeficientDesign { ratio: 0.0 })?;
    let ratio = lu.pivot_ratio();
    if ratio <= RANK_TOL {
        return Err(Error::RankDeficientDesign { ratio });
    }
    Ok(lu)
}

fn serialize_rows<S: Serializer>(m: &DenseMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    m.to_rows().serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    /// `B̂`
    #[serde(rename = "B")]
    pub estimate: Vec<f64>,
    /// Covariance of `B̂`.
    #[serde(rename = "D", serialize_with = "serialize_rows")]
    pub covariance: DenseMatrix,
    /// `sqrt(rᵀ·K⁻¹·r)` for `r = Z − F·B̂`.
    pub residual_norm: f64,
}

pub fn blue_estimate(model: &LinearMeanModel, z: &[f64], kinv: &dyn StructuredPrecision) -> Result<EstimateResult> {
    let (n, p) = (model.observations(), model.parameters());
    if z.len() != n || kinv.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} observations in the model, {} measurements, precision of size {}",
            z.len(),
            kinv.dim()
        )));
    }
    let f = &model.basis;
    let columns: Vec<Vec<f64>> = (0..p).map(|k| (0..n).map(|i| f[(i, k)]).collect()).collect();
    let weighted: Vec<Vec<f64>> = columns.iter().map(|c| kinv.apply(c)).collect();
    let mut normal = DenseMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let v = 0.5 * (dot(&columns[a], &weighted[b]) + dot(&columns[b], &weighted[a]));
            normal[(a, b)] = v;
            normal[(b, a)] = v;
        }
    }
    let lu = pivot_check(&normal)?;
    let kz = kinv.apply(z);
    let rhs: Vec<f64> = columns.iter().map(|c| dot(c, &kz)).collect();
    let estimate = lu.solve(&rhs);
    let covariance = lu.inverse();

    let residual: Vec<f64> = (0..n).map(|i| z[i] - dot(f.row(i), &estimate)).collect();
    let quad = dot(&residual, &kinv.apply(&residual));
    Ok(EstimateResult { estimate, covariance, residual_norm: quad.max(0.0).sqrt() })
}

/// `fᵀ(t_index)·B̂` for a 0-based observation index.
pub fn predicted_mean(model: &LinearMeanModel, estimate: &[f64], index: usize) -> f64 {
    dot(model.basis.row(index), estimate)
}
