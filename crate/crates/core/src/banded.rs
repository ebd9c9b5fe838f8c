//! Symmetric covariances of m-connected Markov processes.
//!
//! Such a matrix is fixed by its entries inside the band `|i − j| ≤ m`.
//! With `[i]` the window of the (at most) `m` points ending at `i`, the
//! transition vectors are
//!
//! ```text
//! Γ_i = K_m[i]⁻¹ · k_[i],i+1            (length min(i, m))
//! ```
//!
//! every entry beyond the band follows from
//!
//! ```text
//! k_ij = k_{i,[j−1]}ᵀ · Γ_{j−1}          (j > i + m)
//! ```
//!
//! and the inverse is banded with half-width `m`. The pivots are
//! `α_1 = k_11`, `α_i = k_ii − k_{i,[i−1]}ᵀ·Γ_{i−1}` and the determinant of every
//! leading corner is the running product of the `α`.

use serde::{Deserialize, Serialize};

use crate::dense::{DenseMatrix, LuFactor, DEFAULT_PIVOT_TOL};
use crate::error::{Error, Result};
use crate::{DeterminantReport, StructureReport};

/// In-band storage: `diagonals[k][i]` holds `k_{i,i+k}` (0-based) for
/// offsets `k = 0..=m`; diagonal `k` has `n − k` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BandRepr", into = "BandRepr")]
pub struct BandedGeneratorForm {
    n: usize,
    m: usize,
    diagonals: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct BandRepr {
    n: usize,
    m: usize,
    diagonals: Vec<Vec<f64>>,
}

impl TryFrom<BandRepr> for BandedGeneratorForm {
    type Error = Error;

    fn try_from(r: BandRepr) -> Result<Self> {
        Self::new(r.n, r.m, r.diagonals)
    }
}

impl From<BandedGeneratorForm> for BandRepr {
    fn from(b: BandedGeneratorForm) -> Self {
        BandRepr { n: b.n, m: b.m, diagonals: b.diagonals }
    }
}

fn check_band_shape(n: usize, m: usize, diagonals: &[Vec<f64>]) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput("band needs n >= 1".into()));
    }
    if m >= n {
        return Err(Error::InvalidInput(format!("half-bandwidth {m} must be below n = {n}")));
    }
    if diagonals.len() != m + 1 {
        return Err(Error::DimensionMismatch(format!("expected {} diagonals, got {}", m + 1, diagonals.len())));
    }
    for (k, d) in diagonals.iter().enumerate() {
        if d.len() != n - k {
            return Err(Error::DimensionMismatch(format!(
                "diagonal {k} has {} entries, expected {}",
                d.len(),
                n - k
            )));
        }
    }
    Ok(())
}

impl BandedGeneratorForm {
    pub fn new(n: usize, m: usize, diagonals: Vec<Vec<f64>>) -> Result<Self> {
        check_band_shape(n, m, &diagonals)?;
        Ok(Self { n, m, diagonals })
    }

    /// Copies the in-band upper triangle of `mat`.
    pub fn from_dense(mat: &DenseMatrix, m: usize) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::NotSquare { rows: mat.rows(), cols: mat.cols() });
        }
        let n = mat.rows();
        let diagonals = (0..=m.min(n - 1)).map(|k| (0..n - k).map(|i| mat[(i, i + k)]).collect()).collect();
        Self::new(n, m.min(n - 1), diagonals)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn diagonals(&self) -> &[Vec<f64>] {
        &self.diagonals
    }

    /// In-band entry, 0-based; `None` outside the band.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        let k = hi - lo;
        (k <= self.m).then(|| self.diagonals[k][lo])
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.get(i, j).expect("in-band access")
    }

    /// Number of stored values; equals [`storage_count`].
    pub fn value_count(&self) -> usize {
        self.diagonals.iter().map(Vec::len).sum::<usize>() * 2 - self.n
    }
}

/// Transition vectors `Γ_1..Γ_{n−1}`. `vector(p)` (0-based predecessor `p`)
/// is aligned with the points `p + 1 − len ..= p`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionVectorSet {
    vectors: Vec<Vec<f64>>,
}

impl TransitionVectorSet {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// `Γ_{p+1}` in 1-based terms.
    pub fn vector(&self, p: usize) -> &[f64] {
        &self.vectors[p]
    }

    /// First point (0-based) of the window `Γ` for predecessor `p` refers to.
    pub fn window_start(&self, p: usize) -> usize {
        p + 1 - self.vectors[p].len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.vectors.iter().map(Vec::as_slice)
    }
}

/// Band inverse with half-width `m`; `diagonals[k][i]` is `c_{i,i+k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BandInverseRepr", into = "BandInverseRepr")]
pub struct BandedMatrix {
    n: usize,
    m: usize,
    diagonals: Vec<Vec<f64>>,
    alphas: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BandInverseRepr {
    n: usize,
    m: usize,
    diagonals: Vec<Vec<f64>>,
    alphas: Vec<f64>,
}

impl TryFrom<BandInverseRepr> for BandedMatrix {
    type Error = Error;

    fn try_from(r: BandInverseRepr) -> Result<Self> {
        check_band_shape(r.n, r.m, &r.diagonals)?;
        if r.alphas.len() != r.n {
            return Err(Error::DimensionMismatch("alphas must have n entries".into()));
        }
        Ok(Self { n: r.n, m: r.m, diagonals: r.diagonals, alphas: r.alphas })
    }
}

impl From<BandedMatrix> for BandInverseRepr {
    fn from(b: BandedMatrix) -> Self {
        BandInverseRepr { n: b.n, m: b.m, diagonals: b.diagonals, alphas: b.alphas }
    }
}

impl BandedMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn diagonals(&self) -> &[Vec<f64>] {
        &self.diagonals
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        if hi - lo <= self.m {
            self.diagonals[hi - lo][lo]
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// `y = C·x` in `O(n·m)`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "vector length");
        let mut y: Vec<f64> = self.diagonals[0].iter().zip(x).map(|(c, v)| c * v).collect();
        for k in 1..=self.m {
            for (i, c) in self.diagonals[k].iter().enumerate() {
                y[i] += c * x[i + k];
                y[i + k] += c * x[i];
            }
        }
        y
    }
}

/// Solves `K_m[i]·Γ_i = k_[i],i+1` for `i = 1..n−1`.
///
/// The local blocks are factored, never inverted; `tol` is the relative
/// pivot threshold of those factorizations.
pub fn transition_vectors(k: &BandedGeneratorForm, tol: f64) -> Result<TransitionVectorSet> {
    let m = k.m;
    let mut vectors = Vec::with_capacity(k.n.saturating_sub(1));
    for p in 0..k.n.saturating_sub(1) {
        let len = (p + 1).min(m);
        if len == 0 {
            vectors.push(Vec::new());
            continue;
        }
        let start = p + 1 - len;
        let block = DenseMatrix::from_fn(len, len, |r, c| k.at(start + r, start + c));
        let rhs: Vec<f64> = (start..=p).map(|r| k.at(r, p + 1)).collect();
        let lu = LuFactor::new(&block, tol).map_err(|_| Error::SingularLocalBlock { index: p + 1 })?;
        vectors.push(lu.solve(&rhs));
    }
    Ok(TransitionVectorSet { vectors })
}

/// Full symmetric matrix, filling the out-of-band entries column by column.
pub fn expand(k: &BandedGeneratorForm, tol: f64) -> Result<DenseMatrix> {
    let gammas = transition_vectors(k, tol)?;
    Ok(expand_with(k, &gammas))
}

fn expand_with(k: &BandedGeneratorForm, gammas: &TransitionVectorSet) -> DenseMatrix {
    let (n, m) = (k.n, k.m);
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..=(i + m).min(n - 1) {
            out[(i, j)] = k.at(i, j);
            out[(j, i)] = out[(i, j)];
        }
    }
    for j in m + 1..n {
        let g = gammas.vector(j - 1);
        let start = gammas.window_start(j - 1);
        for i in (0..j - m).rev() {
            let v: f64 = g.iter().enumerate().map(|(r, gr)| out[(i, start + r)] * gr).sum();
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

fn pivots(k: &BandedGeneratorForm, gammas: &TransitionVectorSet, tol: f64) -> Result<Vec<f64>> {
    let scale = k.diagonals[0].iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut alphas = Vec::with_capacity(k.n);
    for i in 0..k.n {
        let mut alpha = k.at(i, i);
        if i > 0 {
            let g = gammas.vector(i - 1);
            let start = gammas.window_start(i - 1);
            alpha -= g.iter().enumerate().map(|(r, gr)| k.at(i, start + r) * gr).sum::<f64>();
        }
        if alpha <= tol * scale {
            return Err(Error::NotPositiveDefinite { index: i + 1, pivot: alpha });
        }
        alphas.push(alpha);
    }
    Ok(alphas)
}

/// Band inverse of the m-connected covariance.
///
/// Built by bordering with vector couplings: adding point `i` contributes
/// `w_i·w_iᵀ / α_i` where `w_i` is `1` at `i` and `−Γ_{i−1}` on the window
/// `[i−1]`, so nothing ever leaves the band.
pub fn invert(k: &BandedGeneratorForm, tol: f64) -> Result<BandedMatrix> {
    let gammas = transition_vectors(k, tol)?;
    let alphas = pivots(k, &gammas, tol)?;
    let (n, m) = (k.n, k.m);
    let mut diagonals: Vec<Vec<f64>> = (0..=m).map(|d| vec![0.0; n - d]).collect();
    let mut w = Vec::with_capacity(m + 1);
    for (i, alpha) in alphas.iter().enumerate() {
        w.clear();
        let start = if i == 0 {
            0
        } else {
            w.extend(gammas.vector(i - 1).iter().map(|g| -g));
            gammas.window_start(i - 1)
        };
        w.push(1.0);
        let inv_alpha = 1.0 / alpha;
        for a in 0..w.len() {
            let wa = w[a] * inv_alpha;
            for b in a..w.len() {
                diagonals[b - a][start + a] += wa * w[b];
            }
        }
    }
    Ok(BandedMatrix { n, m, diagonals, alphas })
}

/// Band inverse evaluated entry by entry from the closed-form sums
///
/// ```text
/// c_ii     = 1/α_i + Σ_{k=0}^{w} γ²_{i+k, m−k} / α_{i+k+1}
/// c_{i,i+k} = −γ_{i+k−1, m−k+1} / α_{i+k} + Σ_{j=k}^{w} γ_{i+j, m−j}·γ_{i+j, m+k−j} / α_{i+j+1}
/// ```
///
/// with `w = m − 1` for `i ≤ n − m`, `w = n − i − 1` otherwise, and empty sums
/// equal to zero. `γ_{r,s}` is component `s` of `Γ_r` right-aligned in a length
/// `m` vector (leading components of the short vectors `Γ_r`, `r < m`, are 0).
/// Kept as a cross-check for [`invert`].
pub fn invert_by_entry_formulas(k: &BandedGeneratorForm, tol: f64) -> Result<BandedMatrix> {
    let gammas = transition_vectors(k, tol)?;
    let alphas = pivots(k, &gammas, tol)?;
    let (n, m) = (k.n as isize, k.m as isize);
    // 1-based accessors
    let g = |r: isize, s: isize| -> f64 {
        if r < 1 || r > n - 1 || s < 1 || s > m {
            return 0.0;
        }
        let v = gammas.vector((r - 1) as usize);
        let pad = m - v.len() as isize;
        if s <= pad {
            0.0
        } else {
            v[(s - pad - 1) as usize]
        }
    };
    let alpha = |i: isize| alphas[(i - 1) as usize];
    let mut diagonals: Vec<Vec<f64>> = (0..=k.m).map(|d| vec![0.0; k.n - d]).collect();
    for i in 1..=n {
        let w = if i <= n - m { m - 1 } else { n - i - 1 };
        let mut c = 1.0 / alpha(i);
        for kk in 0..=w {
            c += g(i + kk, m - kk).powi(2) / alpha(i + kk + 1);
        }
        diagonals[0][(i - 1) as usize] = c;
        for kk in 1..=m.min(n - i) {
            let mut c = -g(i + kk - 1, m - kk + 1) / alpha(i + kk);
            for j in kk..=w {
                c += g(i + j, m - j) * g(i + j, m + kk - j) / alpha(i + j + 1);
            }
            diagonals[kk as usize][(i - 1) as usize] = c;
        }
    }
    Ok(BandedMatrix { n: k.n, m: k.m, diagonals, alphas })
}

/// `det K_i = α_1 ··· α_i` for every leading corner.
pub fn determinant(k: &BandedGeneratorForm, tol: f64) -> Result<DeterminantReport> {
    let gammas = transition_vectors(k, tol)?;
    Ok(DeterminantReport::from_factors(pivots(k, &gammas, tol)?))
}

/// Tests whether `mat` is the covariance of an m-connected process: every
/// out-of-band entry must match its reconstruction from the band to
/// `tol · max|mat|`. `m = 0` tests for a diagonal matrix.
pub fn connectivity_test(mat: &DenseMatrix, m: usize, tol: f64) -> Result<StructureReport> {
    if !mat.is_square() {
        return Err(Error::NotSquare { rows: mat.rows(), cols: mat.cols() });
    }
    let scale = mat.max_abs();
    let asym = mat.asymmetry();
    if asym > tol * scale {
        return Err(Error::NotSymmetric { residual: asym });
    }
    let n = mat.rows();
    let mut report = StructureReport::new(tol * scale);
    if m + 1 >= n {
        return Ok(report);
    }
    let band = BandedGeneratorForm::from_dense(mat, m)?;
    let rebuilt = expand(&band, DEFAULT_PIVOT_TOL)?;
    for i in 0..n {
        for j in i + m + 1..n {
            report.record(i + 1, j + 1, (rebuilt[(i, j)] - mat[(i, j)]).abs());
        }
    }
    Ok(report)
}

/// Independent values of an `n`x`n` matrix with half-bandwidth `m`,
/// `w* = (2m + 1)·n − m·(m + 1)`.
pub fn storage_count(n: usize, m: usize) -> usize {
    assert!(n == 0 || m < n, "half-bandwidth must be below n");
    (2 * m + 1) * n - m * (m + 1)
}
