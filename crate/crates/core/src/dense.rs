//! Reference dense linear algebra.
//!
//! Everything structured in this crate is checked against the routines here:
//! LU with partial pivoting for inverses and determinants, and a Cholesky
//! factorization for positive-definiteness checks and Gaussian sampling.
//! None of it is tuned for speed.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative pivot threshold of the oracle.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-12;

/// Relative asymmetry accepted by [`factor_spd`].
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Row-major dense matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DenseRepr", into = "DenseRepr")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DenseRepr {
    rows: usize,
    cols: usize,
    data: Vec<Vec<f64>>,
}

impl TryFrom<DenseRepr> for DenseMatrix {
    type Error = Error;

    fn try_from(repr: DenseRepr) -> Result<Self> {
        if repr.data.len() != repr.rows || repr.data.iter().any(|r| r.len() != repr.cols) {
            return Err(Error::DimensionMismatch(format!(
                "dense document declares {}x{} but data has a different shape",
                repr.rows, repr.cols
            )));
        }
        DenseMatrix::new(repr.rows, repr.cols, repr.data.concat())
    }
}

impl From<DenseMatrix> for DenseRepr {
    fn from(m: DenseMatrix) -> Self {
        DenseRepr {
            rows: m.rows,
            cols: m.cols,
            data: m.data.chunks(m.cols).map(<[f64]>::to_vec).collect(),
        }
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("matrix must have at least one row and column".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for {rows}x{cols}, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row slices; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = rhs.row(k);
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entrywise difference. Panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Largest |M_ij - M_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows.min(self.cols) {
            for j in i + 1..self.rows.min(self.cols) {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Copies the `size`x`size` block whose top-left corner is (`r0`, `c0`).
    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    /// Leading principal `k`x`k` submatrix.
    pub fn leading(&self, k: usize) -> Self {
        self.submatrix(0, 0, k, k)
    }

    fn require_square(&self) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(Error::NotSquare { rows: self.rows, cols: self.cols })
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// LU factorization with partial pivoting, `P·M = L·U`.
#[derive(Debug, Clone)]
pub struct LuFactor {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
    min_pivot: f64,
    max_pivot: f64,
}

impl LuFactor {
    /// Factors `m`, failing when a pivot magnitude drops to `tol * max|m|` or below.
    pub fn new(m: &DenseMatrix, tol: f64) -> Result<Self> {
        let n = m.require_square()?;
        let threshold = tol * m.max_abs();
        let mut lu = m.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut min_pivot = f64::INFINITY;
        let mut max_pivot = 0.0f64;
        for k in 0..n {
            let (p, pmag) = (k..n)
                .map(|r| (r, lu[r * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmag <= threshold || pmag == 0.0 {
                return Err(Error::SingularMatrix { step: k + 1, pivot: pmag });
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            min_pivot = min_pivot.min(pmag);
            max_pivot = max_pivot.max(pmag);
            let pivot = lu[k * n + k];
            for r in k + 1..n {
                let factor = lu[r * n + k] / pivot;
                lu[r * n + k] = factor;
                if factor != 0.0 {
                    let (upper, lower) = lu.split_at_mut(r * n);
                    let src = &upper[k * n + k + 1..k * n + n];
                    for (d, s) in lower[k + 1..n].iter_mut().zip(src) {
                        *d -= factor * s;
                    }
                }
            }
        }
        Ok(Self { n, lu, perm, sign, min_pivot, max_pivot })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn determinant(&self) -> f64 {
        (0..self.n).map(|i| self.lu[i * self.n + i]).product::<f64>() * self.sign
    }

    /// Ratio of the smallest to the largest pivot magnitude.
    pub fn pivot_ratio(&self) -> f64 {
        self.min_pivot / self.max_pivot
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n, "rhs length");
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s = dot(&self.lu[i * n..i * n + i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s = dot(&self.lu[i * n + i + 1..(i + 1) * n], &x[i + 1..]);
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }

    /// Solves for all columns of `b` at once using row operations.
    pub fn solve_matrix(&self, b: &DenseMatrix) -> DenseMatrix {
        let n = self.n;
        assert_eq!(b.rows, n, "rhs rows");
        let w = b.cols;
        let mut x = DenseMatrix::zeros(n, w);
        for (i, &p) in self.perm.iter().enumerate() {
            x.data[i * w..(i + 1) * w].copy_from_slice(b.row(p));
        }
        for i in 1..n {
            let (done, rest) = x.data.split_at_mut(i * w);
            let xi = &mut rest[..w];
            for k in 0..i {
                let l = self.lu[i * n + k];
                if l != 0.0 {
                    for (d, s) in xi.iter_mut().zip(&done[k * w..(k + 1) * w]) {
                        *d -= l * s;
                    }
                }
            }
        }
        for i in (0..n).rev() {
            let (head, tail) = x.data.split_at_mut((i + 1) * w);
            let xi = &mut head[i * w..];
            for k in i + 1..n {
                let u = self.lu[i * n + k];
                if u != 0.0 {
                    let off = (k - i - 1) * w;
                    for (d, s) in xi.iter_mut().zip(&tail[off..off + w]) {
                        *d -= u * s;
                    }
                }
            }
            let inv = 1.0 / self.lu[i * n + i];
            xi.iter_mut().for_each(|v| *v *= inv);
        }
        x
    }

    pub fn inverse(&self) -> DenseMatrix {
        self.solve_matrix(&DenseMatrix::identity(self.n))
    }
}

/// Dense inverse by LU with partial pivoting.
pub fn invert_dense(m: &DenseMatrix, tol: f64) -> Result<DenseMatrix> {
    Ok(LuFactor::new(m, tol)?.inverse())
}

/// Determinant by the same elimination; 0 when an exactly zero pivot appears.
pub fn determinant_dense(m: &DenseMatrix) -> Result<f64> {
    m.require_square()?;
    match LuFactor::new(m, 0.0) {
        Ok(lu) => Ok(lu.determinant()),
        Err(Error::SingularMatrix { .. }) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// max|M·X − I|, the residual used to validate inverses.
pub fn inverse_residual(m: &DenseMatrix, inv: &DenseMatrix) -> Result<f64> {
    let prod = m.matmul(inv)?;
    Ok(prod.max_abs_diff(&DenseMatrix::identity(prod.rows)))
}

/// Lower-triangular Cholesky factor `L` with `M = L·Lᵀ` and positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangularFactor {
    l: DenseMatrix,
}

impl LowerTriangularFactor {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.l
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.l
    }

    /// `L·x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.l.rows;
        (0..n).map(|i| dot(&self.l.row(i)[..=i], &x[..=i])).collect()
    }

    pub fn log_determinant(&self) -> f64 {
        2.0 * (0..self.l.rows).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }
}

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// Symmetry is required to [`SYMMETRY_TOL`]` × max|M|`; a diagonal pivot at or
/// below `tol × max|M|` is reported as [`Error::NotPositiveDefinite`].
pub fn factor_spd(m: &DenseMatrix, tol: f64) -> Result<LowerTriangularFactor> {
    let n = m.require_square()?;
    let scale = m.max_abs();
    let asym = m.asymmetry();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { residual: asym });
    }
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let d = m[(j, j)] - dot(&l.row(j)[..j], &l.row(j)[..j]);
        if d <= tol * scale {
            return Err(Error::NotPositiveDefinite { index: j + 1, pivot: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let s = m[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = s / ljj;
        }
    }
    Ok(LowerTriangularFactor { l })
}
