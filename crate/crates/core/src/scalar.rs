//! Matrices whose inverse is tridiagonal.
//!
//! A matrix of this class is fixed by its diagonal `a_11..a_nn` and two
//! coupling sequences `γ_1..γ_{n−1}` (below the diagonal) and `λ_1..λ_{n−1}`
//! (above it). With 1-based indices the off-diagonal entries are
//!
//! ```text
//! a_ij = a_jj · γ_j · γ_{j+1} ··· γ_{i−1}     (i > j)
//! a_ij = a_ii · λ_i · λ_{i+1} ··· λ_{j−1}     (j > i)
//! ```
//!
//! and its inverse is tridiagonal with entries built from the Schur pivots
//!
//! ```text
//! α_1 = a_11,  α_i = a_ii − γ_{i−1} λ_{i−1} a_{i−1,i−1}
//! μ_1 = a_22,  μ_i = a_{i+1,i+1} − γ_{i−1} γ_i λ_{i−1} λ_i a_{i−1,i−1}
//! ```
//!
//! Storage is 0-based; the documentation keeps the 1-based convention.

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::DeterminantReport;

/// Default relative threshold on the Schur pivots `α_i`.
pub const DEFAULT_ALPHA_TOL: f64 = 1e-12;

/// Compact `3n − 2` value representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarGeneratorForm {
    diag: Vec<f64>,
    gamma: Vec<f64>,
    lambda: Vec<f64>,
}

impl ScalarGeneratorForm {
    pub fn new(diag: Vec<f64>, gamma: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidInput("generator needs at least one diagonal entry".into()));
        }
        if gamma.len() + 1 != diag.len() || lambda.len() + 1 != diag.len() {
            return Err(Error::DimensionMismatch(format!(
                "diag has {} entries, gamma {} and lambda {}; couplings need n - 1",
                diag.len(),
                gamma.len(),
                lambda.len()
            )));
        }
        Ok(Self { diag, gamma, lambda })
    }

    /// Symmetric generator, `λ = γ`.
    pub fn symmetric(diag: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        let lambda = gamma.clone();
        Self::new(diag, gamma, lambda)
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Number of stored values, always `3n − 2`.
    pub fn value_count(&self) -> usize {
        self.diag.len() + self.gamma.len() + self.lambda.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.gamma == self.lambda
    }

    /// Entry `(i, j)` of the expanded matrix, 0-based.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => self.diag[i],
            Greater => self.diag[j] * self.gamma[j..i].iter().product::<f64>(),
            Less => self.diag[i] * self.lambda[i..j].iter().product::<f64>(),
        }
    }

    /// Schur pivots `α_1..α_n`.
    pub fn alphas(&self) -> Vec<f64> {
        let a = &self.diag;
        let mut alphas = Vec::with_capacity(a.len());
        alphas.push(a[0]);
        for i in 1..a.len() {
            alphas.push(a[i] - self.gamma[i - 1] * self.lambda[i - 1] * a[i - 1]);
        }
        alphas
    }

    /// `μ_1..μ_{n−1}`.
    pub fn mus(&self) -> Vec<f64> {
        let a = &self.diag;
        let n = a.len();
        let mut mus = Vec::with_capacity(n.saturating_sub(1));
        if n >= 2 {
            mus.push(a[1]);
        }
        for i in 1..n.saturating_sub(1) {
            let g = self.gamma[i - 1] * self.gamma[i];
            let l = self.lambda[i - 1] * self.lambda[i];
            mus.push(a[i + 1] - g * l * a[i - 1]);
        }
        mus
    }
}

/// Tridiagonal inverse together with the pivots that produced it.
///
/// `upper[i]` is entry `(i, i+1)` and `lower[i]` is entry `(i+1, i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TridiagonalMatrix {
    main: Vec<f64>,
    upper: Vec<f64>,
    lower: Vec<f64>,
    alphas: Vec<f64>,
    mus: Vec<f64>,
}

impl TridiagonalMatrix {
    pub fn n(&self) -> usize {
        self.main.len()
    }

    pub fn main(&self) -> &[f64] {
        &self.main
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn mus(&self) -> &[f64] {
        &self.mus
    }

    /// Entry `(i, j)`, zero outside the three central diagonals.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.main[i]
        } else if j == i + 1 {
            self.upper[i]
        } else if i == j + 1 {
            self.lower[j]
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.n();
        DenseMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// `y = T·x` in `O(n)`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(x.len(), n, "vector length");
        (0..n)
            .map(|i| {
                let mut y = self.main[i] * x[i];
                if i > 0 {
                    y += self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.upper[i] * x[i + 1];
                }
                y
            })
            .collect()
    }
}

/// Full `n`x`n` matrix of the generator.
pub fn expand(gen: &ScalarGeneratorForm) -> DenseMatrix {
    let n = gen.n();
    let mut out = DenseMatrix::zeros(n, n);
    for j in 0..n {
        out[(j, j)] = gen.diag[j];
        // Walk away from the diagonal carrying the running product.
        let mut down = gen.diag[j];
        let mut right = gen.diag[j];
        for i in j + 1..n {
            down *= gen.gamma[i - 1];
            right *= gen.lambda[i - 1];
            out[(i, j)] = down;
            out[(j, i)] = right;
        }
    }
    out
}

fn check_alphas(alphas: &[f64], diag: &[f64], tol: f64) -> Result<()> {
    let scale = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let threshold = tol * scale;
    match alphas.iter().position(|a| a.abs() <= threshold || *a == 0.0) {
        Some(i) => Err(Error::SingularLeadingMinor { index: i + 1, alpha: alphas[i] }),
        None => Ok(()),
    }
}

/// Tridiagonal inverse in `O(n)`.
///
/// Every leading minor must be nonsingular: `|α_i| > tol · max|a_ii|`.
pub fn invert(gen: &ScalarGeneratorForm, tol: f64) -> Result<TridiagonalMatrix> {
    let n = gen.n();
    let alphas = gen.alphas();
    check_alphas(&alphas, &gen.diag, tol)?;
    let mus = gen.mus();
    let mut main = Vec::with_capacity(n);
    for i in 0..n - 1 {
        main.push(mus[i] / (alphas[i] * alphas[i + 1]));
    }
    main.push(1.0 / alphas[n - 1]);
    let upper = (0..n - 1).map(|i| -gen.lambda[i] / alphas[i + 1]).collect();
    let lower = (0..n - 1).map(|i| -gen.gamma[i] / alphas[i + 1]).collect();
    Ok(TridiagonalMatrix { main, upper, lower, alphas, mus })
}

/// Determinant of the expansion and of every leading corner, `det A_i = α_1 ··· α_i`.
pub fn determinant(gen: &ScalarGeneratorForm) -> DeterminantReport {
    DeterminantReport::from_factors(gen.alphas())
}

/// Recovers the generator of `m`, verifying every entry beyond the first
/// off-diagonals against the reconstruction to `tol · max|m|`.
///
/// Couplings come from the first off-diagonals only,
/// `γ_i = m_{i+1,i} / m_ii` and `λ_i = m_{i,i+1} / m_ii`.
pub fn compress(m: &DenseMatrix, tol: f64) -> Result<ScalarGeneratorForm> {
    if !m.is_square() {
        return Err(Error::NotSquare { rows: m.rows(), cols: m.cols() });
    }
    let n = m.rows();
    let diag: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    if let Some(i) = diag.iter().position(|&d| d == 0.0) {
        return Err(Error::ZeroDiagonal { index: i + 1 });
    }
    let gamma = (0..n - 1).map(|i| m[(i + 1, i)] / diag[i]).collect();
    let lambda = (0..n - 1).map(|i| m[(i, i + 1)] / diag[i]).collect();
    let gen = ScalarGeneratorForm { diag, gamma, lambda };

    let rebuilt = expand(&gen);
    let threshold = tol * m.max_abs();
    let mut worst = (0, 0, 0.0f64);
    for i in 0..n {
        for j in 0..n {
            let r = (rebuilt[(i, j)] - m[(i, j)]).abs();
            if r > worst.2 {
                worst = (i, j, r);
            }
        }
    }
    if worst.2 > threshold {
        return Err(Error::NotGeneratorForm { row: worst.0 + 1, col: worst.1 + 1, residual: worst.2 });
    }
    Ok(gen)
}

/// Inverse by successive bordering from the 1x1 corner.
pub fn bordering_invert(m: &DenseMatrix, tol: f64) -> Result<DenseMatrix> {
    bordering_invert_observed(m, tol, |_| {})
}

/// Bordering inverse that hands every intermediate `A_i⁻¹` (including the
/// final one) to `observe`.
///
/// With `A_{i+1} = [[A_i, a], [bᵀ, d]]`, `u = A_i⁻¹a`, `v = bᵀA_i⁻¹` and
/// `α = d − bᵀu`:
///
/// ```text
/// A_{i+1}⁻¹ = [[A_i⁻¹ + u·v/α, −u/α], [−v/α, 1/α]]
/// ```
pub fn bordering_invert_observed(
    m: &DenseMatrix,
    tol: f64,
    mut observe: impl FnMut(&DenseMatrix),
) -> Result<DenseMatrix> {
    if !m.is_square() {
        return Err(Error::NotSquare { rows: m.rows(), cols: m.cols() });
    }
    let n = m.rows();
    let threshold = tol * m.max_abs();
    let a11 = m[(0, 0)];
    if a11.abs() <= threshold || a11 == 0.0 {
        return Err(Error::SingularLeadingMinor { index: 1, alpha: a11 });
    }
    let mut inv = DenseMatrix::from_fn(1, 1, |_, _| 1.0 / a11);
    observe(&inv);
    for k in 1..n {
        let col: Vec<f64> = (0..k).map(|r| m[(r, k)]).collect();
        let row = &m.row(k)[..k];
        let u = inv.matvec(&col)?;
        let v: Vec<f64> = (0..k).map(|c| (0..k).map(|r| row[r] * inv[(r, c)]).sum()).collect();
        let alpha = m[(k, k)] - crate::dense::dot(row, &u);
        if alpha.abs() <= threshold || alpha == 0.0 {
            return Err(Error::SingularLeadingMinor { index: k + 1, alpha });
        }
        let next = DenseMatrix::from_fn(k + 1, k + 1, |i, j| match (i < k, j < k) {
            (true, true) => inv[(i, j)] + u[i] * v[j] / alpha,
            (true, false) => -u[i] / alpha,
            (false, true) => -v[j] / alpha,
            (false, false) => 1.0 / alpha,
        });
        inv = next;
        observe(&inv);
    }
    Ok(inv)
}
