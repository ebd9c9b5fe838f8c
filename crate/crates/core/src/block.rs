//! Covariances of vector (m-dimensional) Markov processes.
//!
//! The point-major covariance `K_N` (`N = n·m`) of such a process is fixed by
//! its diagonal blocks `K_ii` and the transition blocks
//!
//! ```text
//! Γ_i = K_ii⁻¹ · K_{i,i+1}
//! ```
//!
//! with `K_ij = K_ii·Γ_i·Γ_{i+1}···Γ_{j−1}` above the diagonal and the
//! transpose below. Its inverse is block-tridiagonal. With the Schur blocks
//!
//! ```text
//! A_1 = K_11,   A_{i+1} = K_{i+1,i+1} − Γ_iᵀ·K_ii·Γ_i
//! ```
//!
//! the nonzero blocks are
//!
//! ```text
//! C_{i,i+1} = −Γ_i·A_{i+1}⁻¹,   C_{i+1,i} = C_{i,i+1}ᵀ
//! C_ii      = A_i⁻¹ + Γ_i·A_{i+1}⁻¹·Γ_iᵀ,   C_nn = A_n⁻¹
//! ```
//!
//! The frequently quoted product form `C_ii = A_{i+1}⁻¹·M_i·A_i⁻¹` only holds
//! when the blocks commute; it is not used here. `M_i` is still computed and
//! exposed, as the two-step conditional covariance
//!
//! ```text
//! M_1 = K_22,   M_i = A_{i+1} + Γ_iᵀ·A_i·Γ_i
//!                   = K_{i+1,i+1} − (Γ_{i−1}Γ_i)ᵀ·K_{i−1,i−1}·(Γ_{i−1}Γ_i)
//! ```
//!
//! which reduces to `μ_i` for `m = 1`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{DenseMatrix, LuFactor, DEFAULT_PIVOT_TOL, SYMMETRY_TOL};
use crate::error::{Error, Result};
use crate::{DeterminantReport, StructureReport};

/// Scalar operation tally of a block computation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounter {
    /// Multiplications and divisions.
    pub multiplications: u64,
    /// Additions and subtractions.
    pub additions: u64,
}

impl OpCounter {
    fn mul(&mut self, k: usize) {
        self.multiplications += k as u64;
    }

    fn add(&mut self, k: usize) {
        self.additions += k as u64;
    }
}

// ---- counted m×m kernels ----

fn matmul(a: &DenseMatrix, b: &DenseMatrix, ops: &mut OpCounter) -> DenseMatrix {
    let m = a.rows();
    ops.mul(m * m * m);
    ops.add(m * m * (m - 1));
    a.matmul(b).expect("square blocks")
}

/// `Xᵀ·Y` assumed symmetric: only the upper triangle is computed.
fn sym_tmul(x: &DenseMatrix, y: &DenseMatrix, ops: &mut OpCounter) -> DenseMatrix {
    let m = x.rows();
    let mut out = DenseMatrix::zeros(m, m);
    for r in 0..m {
        for c in r..m {
            let v: f64 = (0..m).map(|k| x[(k, r)] * y[(k, c)]).sum();
            out[(r, c)] = v;
            out[(c, r)] = v;
        }
    }
    let entries = m * (m + 1) / 2;
    ops.mul(entries * m);
    ops.add(entries * (m - 1));
    out
}

/// `X·Yᵀ` assumed symmetric.
fn sym_mul_t(x: &DenseMatrix, y: &DenseMatrix, ops: &mut OpCounter) -> DenseMatrix {
    let m = x.rows();
    let mut out = DenseMatrix::zeros(m, m);
    for r in 0..m {
        for c in r..m {
            let v = crate::dense::dot(x.row(r), y.row(c));
            out[(r, c)] = v;
            out[(c, r)] = v;
        }
    }
    let entries = m * (m + 1) / 2;
    ops.mul(entries * m);
    ops.add(entries * (m - 1));
    out
}

fn sym_combine(a: &DenseMatrix, b: &DenseMatrix, sign: f64, ops: &mut OpCounter) -> DenseMatrix {
    let m = a.rows();
    ops.add(m * (m + 1) / 2);
    DenseMatrix::from_fn(m, m, |r, c| a[(r, c)] + sign * b[(r, c)])
}

/// In-place Gauss-Jordan inverse with row pivoting, `m³ + m` multiplications.
fn gauss_jordan_inverse(a: &DenseMatrix, tol: f64, ops: &mut OpCounter) -> Option<DenseMatrix> {
    let m = a.rows();
    let threshold = tol * a.max_abs();
    let mut w = a.clone();
    let mut swaps = Vec::with_capacity(m);
    for k in 0..m {
        let p = (k..m).max_by(|&x, &y| w[(x, k)].abs().total_cmp(&w[(y, k)].abs())).unwrap();
        if w[(p, k)].abs() <= threshold || w[(p, k)] == 0.0 {
            return None;
        }
        if p != k {
            for c in 0..m {
                let t = w[(k, c)];
                w[(k, c)] = w[(p, c)];
                w[(p, c)] = t;
            }
        }
        swaps.push(p);
        let piv = 1.0 / w[(k, k)];
        w[(k, k)] = 1.0;
        for c in 0..m {
            w[(k, c)] *= piv;
        }
        ops.mul(m + 1);
        for r in 0..m {
            if r == k {
                continue;
            }
            let f = w[(r, k)];
            w[(r, k)] = 0.0;
            for c in 0..m {
                w[(r, c)] -= f * w[(k, c)];
            }
            ops.mul(m);
            ops.add(m);
        }
    }
    for (k, &p) in swaps.iter().enumerate().rev() {
        if p != k {
            for r in 0..m {
                let t = w[(r, k)];
                w[(r, k)] = w[(r, p)];
                w[(r, p)] = t;
            }
        }
    }
    Some(w)
}

// ---- serialization helpers ----

fn blocks_to_rows(blocks: &[DenseMatrix]) -> Vec<Vec<Vec<f64>>> {
    blocks.iter().map(DenseMatrix::to_rows).collect()
}

fn blocks_from_rows(rows: Vec<Vec<Vec<f64>>>, m: Option<usize>) -> Result<Vec<DenseMatrix>> {
    rows.iter()
        .map(|b| {
            let d = DenseMatrix::from_rows(b)?;
            if !d.is_square() || m.is_some_and(|m| d.rows() != m) {
                return Err(Error::DimensionMismatch("blocks must be square of size m".into()));
            }
            Ok(d)
        })
        .collect()
}

/// Diagonal blocks `K_11..K_nn` and transition blocks `Γ_1..Γ_{n−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlockRepr", into = "BlockRepr")]
pub struct BlockGeneratorForm {
    n: usize,
    m: usize,
    diag_blocks: Vec<DenseMatrix>,
    trans_blocks: Vec<DenseMatrix>,
}

#[derive(Serialize, Deserialize)]
struct BlockRepr {
    n: usize,
    m: usize,
    #[serde(rename = "K_diag")]
    k_diag: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "Gamma")]
    gamma: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<BlockRepr> for BlockGeneratorForm {
    type Error = Error;

    fn try_from(r: BlockRepr) -> Result<Self> {
        let diag = blocks_from_rows(r.k_diag, Some(r.m))?;
        let trans = blocks_from_rows(r.gamma, Some(r.m))?;
        if diag.len() != r.n {
            return Err(Error::DimensionMismatch(format!("expected {} diagonal blocks", r.n)));
        }
        Self::new(diag, trans)
    }
}

impl From<BlockGeneratorForm> for BlockRepr {
    fn from(g: BlockGeneratorForm) -> Self {
        BlockRepr { n: g.n, m: g.m, k_diag: blocks_to_rows(&g.diag_blocks), gamma: blocks_to_rows(&g.trans_blocks) }
    }
}

impl BlockGeneratorForm {
    /// Diagonal blocks must be symmetric to [`SYMMETRY_TOL`].
    pub fn new(diag_blocks: Vec<DenseMatrix>, trans_blocks: Vec<DenseMatrix>) -> Result<Self> {
        let n = diag_blocks.len();
        if n == 0 {
            return Err(Error::InvalidInput("need at least one diagonal block".into()));
        }
        let m = diag_blocks[0].rows();
        if trans_blocks.len() + 1 != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} diagonal blocks need {} transition blocks, got {}",
                n - 1,
                trans_blocks.len()
            )));
        }
        for b in diag_blocks.iter().chain(&trans_blocks) {
            if b.rows() != m || b.cols() != m {
                return Err(Error::DimensionMismatch(format!("all blocks must be {m}x{m}")));
            }
        }
        for b in &diag_blocks {
            let asym = b.asymmetry();
            if asym > SYMMETRY_TOL * b.max_abs() {
                return Err(Error::NotSymmetric { residual: asym });
            }
        }
        Ok(Self { n, m, diag_blocks, trans_blocks })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.n * self.m
    }

    pub fn diag_blocks(&self) -> &[DenseMatrix] {
        &self.diag_blocks
    }

    pub fn trans_blocks(&self) -> &[DenseMatrix] {
        &self.trans_blocks
    }

    /// Defining scalars, `(2n − 1)·m²`.
    pub fn value_count(&self) -> usize {
        (2 * self.n - 1) * self.m * self.m
    }
}

/// Nonzero blocks of a block-tridiagonal inverse together with the `A_i`
/// and `M_i` blocks that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlockInverseRepr", into = "BlockInverseRepr")]
pub struct BlockTridiagonalMatrix {
    n: usize,
    m: usize,
    diag_blocks: Vec<DenseMatrix>,
    super_blocks: Vec<DenseMatrix>,
    sub_blocks: Vec<DenseMatrix>,
    a_blocks: Vec<DenseMatrix>,
    m_blocks: Vec<DenseMatrix>,
}

#[derive(Serialize, Deserialize)]
struct BlockInverseRepr {
    #[serde(rename = "C_diag")]
    c_diag: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "C_super")]
    c_super: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "A")]
    a: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "M")]
    m: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<BlockInverseRepr> for BlockTridiagonalMatrix {
    type Error = Error;

    fn try_from(r: BlockInverseRepr) -> Result<Self> {
        let diag_blocks = blocks_from_rows(r.c_diag, None)?;
        let n = diag_blocks.len();
        let m = diag_blocks.first().map(DenseMatrix::rows).ok_or_else(|| Error::InvalidInput("no blocks".into()))?;
        let super_blocks = blocks_from_rows(r.c_super, Some(m))?;
        let a_blocks = blocks_from_rows(r.a, Some(m))?;
        let m_blocks = blocks_from_rows(r.m, Some(m))?;
        if super_blocks.len() + 1 != n || a_blocks.len() != n || m_blocks.len() + 1 != n {
            return Err(Error::DimensionMismatch("inconsistent block counts".into()));
        }
        let sub_blocks = super_blocks.iter().map(DenseMatrix::transpose).collect();
        Ok(Self { n, m, diag_blocks, super_blocks, sub_blocks, a_blocks, m_blocks })
    }
}

impl From<BlockTridiagonalMatrix> for BlockInverseRepr {
    fn from(b: BlockTridiagonalMatrix) -> Self {
        BlockInverseRepr {
            c_diag: blocks_to_rows(&b.diag_blocks),
            c_super: blocks_to_rows(&b.super_blocks),
            a: blocks_to_rows(&b.a_blocks),
            m: blocks_to_rows(&b.m_blocks),
        }
    }
}

impl BlockTridiagonalMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.n * self.m
    }

    pub fn diag_blocks(&self) -> &[DenseMatrix] {
        &self.diag_blocks
    }

    /// `C_{i,i+1}`
    pub fn super_blocks(&self) -> &[DenseMatrix] {
        &self.super_blocks
    }

    /// `C_{i+1,i}`
    pub fn sub_blocks(&self) -> &[DenseMatrix] {
        &self.sub_blocks
    }

    pub fn a_blocks(&self) -> &[DenseMatrix] {
        &self.a_blocks
    }

    pub fn m_blocks(&self) -> &[DenseMatrix] {
        &self.m_blocks
    }

    /// Point-major dense matrix.
    pub fn to_dense(&self) -> DenseMatrix {
        let m = self.m;
        let mut out = DenseMatrix::zeros(self.dim(), self.dim());
        let mut put = |bi: usize, bj: usize, b: &DenseMatrix| {
            for r in 0..m {
                for c in 0..m {
                    out[(bi * m + r, bj * m + c)] = b[(r, c)];
                }
            }
        };
        for i in 0..self.n {
            put(i, i, &self.diag_blocks[i]);
            if i + 1 < self.n {
                put(i, i + 1, &self.super_blocks[i]);
                put(i + 1, i, &self.sub_blocks[i]);
            }
        }
        out
    }

    /// Dense inverse in the component-major layout (see [`component_major_permutation`]).
    pub fn to_component_major_dense(&self) -> DenseMatrix {
        to_component_major(&self.to_dense(), self.n, self.m)
    }

    /// `y = C·x` for a point-major vector, `O(n·m²)`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        assert_eq!(x.len(), n * m, "vector length");
        let mut y = vec![0.0; n * m];
        let mut acc = |bi: usize, bj: usize, b: &DenseMatrix| {
            for r in 0..m {
                y[bi * m + r] += crate::dense::dot(b.row(r), &x[bj * m..(bj + 1) * m]);
            }
        };
        for i in 0..n {
            acc(i, i, &self.diag_blocks[i]);
            if i + 1 < n {
                acc(i, i + 1, &self.super_blocks[i]);
                acc(i + 1, i, &self.sub_blocks[i]);
            }
        }
        y
    }
}

/// Result of [`invert`]: the inverse and the operation tally.
///
/// `ops` covers everything the inverse blocks depend on. `aux_ops` is the
/// separate cost of the exposed `M_i` blocks, which the inverse does not use.
#[derive(Debug, Clone)]
pub struct BlockInversion {
    pub inverse: BlockTridiagonalMatrix,
    pub ops: OpCounter,
    pub aux_ops: OpCounter,
}

/// Solves `K_ii·Γ_i = K_{i,i+1}` for every `i`.
pub fn transition_blocks(diag: &[DenseMatrix], offdiag: &[DenseMatrix], tol: f64) -> Result<Vec<DenseMatrix>> {
    if offdiag.len() + 1 != diag.len() {
        return Err(Error::DimensionMismatch("need one off-diagonal block fewer than diagonal blocks".into()));
    }
    offdiag
        .iter()
        .enumerate()
        .map(|(i, k_next)| {
            let lu = LuFactor::new(&diag[i], tol).map_err(|_| Error::SingularDiagonalBlock { index: i + 1 })?;
            Ok(lu.solve_matrix(k_next))
        })
        .collect()
}

/// Point-major `N`x`N` matrix of the generator.
pub fn expand(gen: &BlockGeneratorForm) -> DenseMatrix {
    let (n, m) = (gen.n, gen.m);
    let mut out = DenseMatrix::zeros(n * m, n * m);
    for i in 0..n {
        let mut chain = gen.diag_blocks[i].clone();
        for j in i..n {
            if j > i {
                chain = chain.matmul(&gen.trans_blocks[j - 1]).expect("square blocks");
            }
            for r in 0..m {
                for c in 0..m {
                    out[(i * m + r, j * m + c)] = chain[(r, c)];
                    out[(j * m + c, i * m + r)] = chain[(r, c)];
                }
            }
        }
    }
    out
}

/// Block-tridiagonal inverse of the expansion.
///
/// `tol` is the relative pivot threshold for inverting each `A_i`.
pub fn invert(gen: &BlockGeneratorForm, tol: f64) -> Result<BlockInversion> {
    let n = gen.n;
    let k = &gen.diag_blocks;
    let g = &gen.trans_blocks;
    let mut ops = OpCounter::default();
    let mut aux_ops = OpCounter::default();

    let mut a_blocks = Vec::with_capacity(n);
    a_blocks.push(k[0].clone());
    for i in 0..n - 1 {
        let kg = matmul(&k[i], &g[i], &mut ops);
        let gkg = sym_tmul(&g[i], &kg, &mut ops);
        a_blocks.push(sym_combine(&k[i + 1], &gkg, -1.0, &mut ops));
    }

    let mut a_inv = Vec::with_capacity(n);
    for (i, a) in a_blocks.iter().enumerate() {
        let inv = gauss_jordan_inverse(a, tol, &mut ops).ok_or(Error::SingularSchurBlock { index: i + 1 })?;
        a_inv.push(inv);
    }

    let mut m_blocks = Vec::with_capacity(n.saturating_sub(1));
    if n >= 2 {
        m_blocks.push(k[1].clone());
    }
    for i in 1..n.saturating_sub(1) {
        let ag = matmul(&a_blocks[i], &g[i], &mut aux_ops);
        let gag = sym_tmul(&g[i], &ag, &mut aux_ops);
        m_blocks.push(sym_combine(&a_blocks[i + 1], &gag, 1.0, &mut aux_ops));
    }

    let mut diag_blocks = Vec::with_capacity(n);
    let mut super_blocks = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        // P = Γ_i·A_{i+1}⁻¹; C_{i,i+1} = −P; C_ii = A_i⁻¹ + P·Γ_iᵀ
        let p = matmul(&g[i], &a_inv[i + 1], &mut ops);
        let pg = sym_mul_t(&p, &g[i], &mut ops);
        diag_blocks.push(sym_combine(&a_inv[i], &pg, 1.0, &mut ops));
        super_blocks.push(p.scale(-1.0));
    }
    diag_blocks.push(a_inv[n - 1].clone());
    let sub_blocks = super_blocks.iter().map(DenseMatrix::transpose).collect();

    Ok(BlockInversion {
        inverse: BlockTridiagonalMatrix { n, m: gen.m, diag_blocks, super_blocks, sub_blocks, a_blocks, m_blocks },
        ops,
        aux_ops,
    })
}

/// `det K_N = ∏ det A_i`, with every leading block-corner determinant.
pub fn determinant(gen: &BlockGeneratorForm, tol: f64) -> Result<DeterminantReport> {
    let mut ops = OpCounter::default();
    let mut dets = Vec::with_capacity(gen.n);
    let mut a = gen.diag_blocks[0].clone();
    for i in 0..gen.n {
        if i > 0 {
            let kg = matmul(&gen.diag_blocks[i - 1], &gen.trans_blocks[i - 1], &mut ops);
            let gkg = sym_tmul(&gen.trans_blocks[i - 1], &kg, &mut ops);
            a = sym_combine(&gen.diag_blocks[i], &gkg, -1.0, &mut ops);
        }
        let lu = LuFactor::new(&a, tol).map_err(|_| Error::SingularSchurBlock { index: i + 1 })?;
        dets.push(lu.determinant());
    }
    Ok(DeterminantReport::from_factors(dets))
}

fn require_blocked(mat: &DenseMatrix, m: usize) -> Result<usize> {
    if !mat.is_square() {
        return Err(Error::NotSquare { rows: mat.rows(), cols: mat.cols() });
    }
    if m == 0 || !mat.rows().is_multiple_of(m) {
        return Err(Error::DimensionMismatch(format!("dimension {} is not a multiple of block size {m}", mat.rows())));
    }
    Ok(mat.rows() / m)
}

fn block_of(mat: &DenseMatrix, m: usize, i: usize, j: usize) -> DenseMatrix {
    mat.submatrix(i * m, j * m, m, m)
}

/// Checks `K(s,t) = K(s,τ)·K(τ,τ)⁻¹·K(τ,t)` for every block triple
/// `s < τ < t` to `tol · max|mat|`. Indices in the report are 1-based blocks.
pub fn markov_block_test(mat: &DenseMatrix, m: usize, tol: f64) -> Result<StructureReport> {
    let n = require_blocked(mat, m)?;
    let mut report = StructureReport::new(tol * mat.max_abs());
    for tau in 1..n.saturating_sub(1) {
        let lu = LuFactor::new(&block_of(mat, m, tau, tau), DEFAULT_PIVOT_TOL)
            .map_err(|_| Error::SingularDiagonalBlock { index: tau + 1 })?;
        for t in tau + 1..n {
            let right = lu.solve_matrix(&block_of(mat, m, tau, t));
            for s in 0..tau {
                let pred = block_of(mat, m, s, tau).matmul(&right)?;
                report.record(s + 1, t + 1, pred.max_abs_diff(&block_of(mat, m, s, t)));
            }
        }
    }
    Ok(report)
}

/// Extracts the generator of a point-major block covariance and verifies that
/// its expansion reproduces `mat` to `tol · max|mat|`.
pub fn compress(mat: &DenseMatrix, m: usize, tol: f64) -> Result<BlockGeneratorForm> {
    let n = require_blocked(mat, m)?;
    let diag: Vec<DenseMatrix> = (0..n).map(|i| block_of(mat, m, i, i)).collect();
    let off: Vec<DenseMatrix> = (0..n - 1).map(|i| block_of(mat, m, i, i + 1)).collect();
    let trans = transition_blocks(&diag, &off, DEFAULT_PIVOT_TOL)?;
    let gen = BlockGeneratorForm::new(diag, trans)?;
    let rebuilt = expand(&gen);
    let mut worst = (0, 0, 0.0f64);
    for r in 0..mat.rows() {
        for c in 0..mat.cols() {
            let d = (rebuilt[(r, c)] - mat[(r, c)]).abs();
            if d > worst.2 {
                worst = (r, c, d);
            }
        }
    }
    if worst.2 > tol * mat.max_abs() {
        return Err(Error::NotGeneratorForm { row: worst.0 + 1, col: worst.1 + 1, residual: worst.2 });
    }
    Ok(gen)
}

/// Predicted operation counts of the block inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OpCountModel {
    pub multiplications: u64,
    pub additions: u64,
}

/// `mult = n·m²(4m+3) − m²(11m+7)/2`,
/// `add = (5n − 6.5)m³ − (2n − 2.5)m² + (n − 1)m`. Both are integers for
/// every `n ≥ 2, m ≥ 1`; the arithmetic is carried out on doubled values.
pub fn op_count_model(n: usize, m: usize) -> OpCountModel {
    let (n, m) = (n as i128, m as i128);
    let mult2 = 2 * n * m * m * (4 * m + 3) - m * m * (11 * m + 7);
    let add2 = (10 * n - 13) * m * m * m - (4 * n - 5) * m * m + 2 * (n - 1) * m;
    OpCountModel { multiplications: (mult2 / 2) as u64, additions: (add2 / 2) as u64 }
}

/// Multiplication budget including the `n·m³` allowance for the `A_i` inversions.
pub fn multiplication_budget(n: usize, m: usize) -> u64 {
    op_count_model(n, m).multiplications + (n * m * m * m) as u64
}

/// Stored values of a dense symmetric `N`x`N` matrix over those of the
/// generator: `[N(N+1)/2] / [(2n−1)m²]`, `N = n·m`.
pub fn memory_ratio(n: usize, m: usize) -> f64 {
    let big_n = (n * m) as f64;
    (big_n * (big_n + 1.0) / 2.0) / (((2 * n - 1) * m * m) as f64)
}

/// `perm[q]` is the point-major index that lands at component-major
/// position `q`: component `c` of point `i` moves from `i·m + c` to `c·n + i`.
pub fn component_major_permutation(n: usize, m: usize) -> Vec<usize> {
    (0..n * m).map(|q| (q % n) * m + q / n).collect()
}

/// Permutes a point-major matrix into the component-major layout, where the
/// matrix consists of `m²` blocks of size `n`x`n`.
pub fn to_component_major(mat: &DenseMatrix, n: usize, m: usize) -> DenseMatrix {
    let perm = component_major_permutation(n, m);
    DenseMatrix::from_fn(n * m, n * m, |r, c| mat[(perm[r], perm[c])])
}

/// Random SPD generator: `K_11` and the innovations `A_i` are SPD and the
/// transition blocks have entries in `[−0.9/m, 0.9/m]`, so their spectral
/// radius stays below 0.9 and the covariance does not grow with `n`.
pub fn random_spd_generator(n: usize, m: usize, rng: &mut impl Rng) -> BlockGeneratorForm {
    let spd = |rng: &mut _| {
        let x = DenseMatrix::from_fn(m, m, |_, _| Rng::random_range(rng, -1.0..1.0));
        let mut s = x.matmul(&x.transpose()).unwrap();
        for d in 0..m {
            s[(d, d)] += 0.5 + m as f64 * 0.25;
        }
        s
    };
    let bound = 0.9 / m as f64;
    let mut diag = vec![spd(rng)];
    let mut trans = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n.saturating_sub(1) {
        let g = DenseMatrix::from_fn(m, m, |_, _| rng.random_range(-bound..bound));
        let innov = spd(rng);
        let gkg = g.transpose().matmul(&diag[i]).unwrap().matmul(&g).unwrap();
        let next = DenseMatrix::from_fn(m, m, |r, c| innov[(r, c)] + 0.5 * (gkg[(r, c)] + gkg[(c, r)]));
        diag.push(next);
        trans.push(g);
    }
    BlockGeneratorForm::new(diag, trans).expect("consistent shapes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{determinant_dense, invert_dense};
    use crate::scalar;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eye_pair(m: usize) -> BlockGeneratorForm {
        BlockGeneratorForm::new(vec![DenseMatrix::identity(m), DenseMatrix::identity(m)], vec![DenseMatrix::identity(m).scale(0.5)])
            .unwrap()
    }

    #[test]
    fn transition_block_examples() {
        let k = DenseMatrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap();
        let g = transition_blocks(&[k.clone(), k.clone()], &[DenseMatrix::zeros(2, 2)], DEFAULT_PIVOT_TOL).unwrap();
        assert_eq!(g[0], DenseMatrix::zeros(2, 2));
        let err = transition_blocks(&[DenseMatrix::zeros(2, 2), k], &[DenseMatrix::zeros(2, 2)], DEFAULT_PIVOT_TOL);
        assert!(matches!(err, Err(Error::SingularDiagonalBlock { index: 1 })));
    }

    #[test]
    fn expand_examples() {
        let k = DenseMatrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap();
        let single = BlockGeneratorForm::new(vec![k.clone()], vec![]).unwrap();
        assert_eq!(expand(&single), k);

        let full = expand(&eye_pair(2));
        let want = DenseMatrix::from_rows(&[
            [1.0, 0.0, 0.5, 0.0],
            [0.0, 1.0, 0.0, 0.5],
            [0.5, 0.0, 1.0, 0.0],
            [0.0, 0.5, 0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(full, want);
    }

    #[test]
    fn invert_identity_pair() {
        let r = invert(&eye_pair(2), DEFAULT_PIVOT_TOL).unwrap();
        let c = &r.inverse;
        let i2 = DenseMatrix::identity(2);
        assert!(c.a_blocks()[0].max_abs_diff(&i2) < 1e-15);
        assert!(c.a_blocks()[1].max_abs_diff(&i2.scale(0.75)) < 1e-15);
        assert!(c.diag_blocks()[0].max_abs_diff(&i2.scale(4.0 / 3.0)) < 1e-15);
        assert!(c.super_blocks()[0].max_abs_diff(&i2.scale(-2.0 / 3.0)) < 1e-15);
        assert!(c.diag_blocks()[1].max_abs_diff(&i2.scale(4.0 / 3.0)) < 1e-15);
    }

    #[test]
    fn scalar_blocks_match_scalar_path() {
        let diag = vec![1.0, 2.0, 3.5, 1.2];
        let gamma = vec![0.4, -0.3, 0.8];
        let s = scalar::ScalarGeneratorForm::symmetric(diag.clone(), gamma.clone()).unwrap();
        let one = |v: f64| DenseMatrix::from_fn(1, 1, |_, _| v);
        let b = BlockGeneratorForm::new(diag.iter().copied().map(one).collect(), gamma.iter().copied().map(one).collect())
            .unwrap();
        let t = scalar::invert(&s, scalar::DEFAULT_ALPHA_TOL).unwrap();
        let c = invert(&b, DEFAULT_PIVOT_TOL).unwrap().inverse;
        for (a, alpha) in c.a_blocks().iter().zip(t.alphas()) {
            assert!((a[(0, 0)] - alpha).abs() <= 1e-15 * alpha.abs());
        }
        for (mb, mu) in c.m_blocks().iter().zip(t.mus()) {
            assert!((mb[(0, 0)] - mu).abs() <= 1e-14 * mu.abs());
        }
        assert!(c.to_dense().max_abs_diff(&t.to_dense()) < 1e-13);
        let det = determinant(&b, DEFAULT_PIVOT_TOL).unwrap().determinant;
        assert!((det - scalar::determinant(&s).determinant).abs() < 1e-14);
    }

    #[test]
    fn random_instance_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let gen = random_spd_generator(4, 2, &mut rng);
        let full = expand(&gen);
        let oracle = invert_dense(&full, DEFAULT_PIVOT_TOL).unwrap();
        let c = invert(&gen, DEFAULT_PIVOT_TOL).unwrap().inverse;
        assert!(c.to_dense().max_abs_diff(&oracle) <= 1e-10 * oracle.max_abs());
        let det = determinant(&gen, DEFAULT_PIVOT_TOL).unwrap().determinant;
        let want = determinant_dense(&full).unwrap();
        assert!((det - want).abs() <= 1e-8 * want.abs());
        for (up, low) in c.super_blocks().iter().zip(c.sub_blocks()) {
            assert!(up.transpose().max_abs_diff(low) <= 1e-12);
        }
    }

    #[test]
    fn singular_schur_block() {
        // Γ = I with K_22 = K_11 makes A_2 = 0
        let k = DenseMatrix::identity(2);
        let gen = BlockGeneratorForm::new(vec![k.clone(), k.clone()], vec![DenseMatrix::identity(2)]).unwrap();
        assert!(matches!(invert(&gen, DEFAULT_PIVOT_TOL), Err(Error::SingularSchurBlock { index: 2 })));
    }

    #[test]
    fn block_markov_test_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gen = random_spd_generator(5, 2, &mut rng);
        let mut full = expand(&gen);
        assert!(markov_block_test(&full, 2, 1e-9).unwrap().holds);
        let v = full[(0, 8)] * 1.1;
        full[(0, 8)] = v;
        full[(8, 0)] = v;
        let r = markov_block_test(&full, 2, 1e-9).unwrap();
        assert!(!r.holds);
        assert_eq!((r.worst_row, r.worst_col), (1, 5));
    }

    #[test]
    fn compress_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gen = random_spd_generator(4, 3, &mut rng);
        let back = compress(&expand(&gen), 3, 1e-9).unwrap();
        for (a, b) in back.trans_blocks().iter().zip(gen.trans_blocks()) {
            assert!(a.max_abs_diff(b) < 1e-10);
        }
        let mut bad = expand(&gen);
        bad[(0, 11)] += 0.5;
        bad[(11, 0)] += 0.5;
        assert!(matches!(compress(&bad, 3, 1e-9), Err(Error::NotGeneratorForm { row: 1, col: 12, .. })));
        assert!(compress(&DenseMatrix::identity(5), 2, 1e-9).is_err());
    }

    #[test]
    fn model_examples() {
        assert_eq!(op_count_model(10, 2), OpCountModel { multiplications: 382, additions: 296 });
        assert_eq!(op_count_model(2, 1), OpCountModel { multiplications: 5, additions: 3 });
        for m in 1..6 {
            let a = op_count_model(100, m);
            let b = op_count_model(200, m);
            let r = b.multiplications as f64 / a.multiplications as f64;
            assert!((r - 2.0).abs() < 0.05, "m = {m}: {r}");
        }
    }

    #[test]
    fn memory_ratio_examples() {
        assert_eq!(format!("{:.2}", memory_ratio(5, 1)), "1.67");
        assert_eq!(format!("{:.2}", memory_ratio(10, 2)), "2.76");
        assert_eq!(format!("{:.2}", memory_ratio(1000, 1)), "250.38");
    }

    #[test]
    fn counter_within_plain_model_at_reference_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(n, m) in &[(10, 2), (20, 2), (10, 3), (50, 3)] {
            let gen = random_spd_generator(n, m, &mut rng);
            let ops = invert(&gen, DEFAULT_PIVOT_TOL).unwrap().ops;
            let model = op_count_model(n, m).multiplications as f64;
            assert!(ops.multiplications as f64 <= 1.10 * model, "(n={n}, m={m}) measured {} vs {model}", ops.multiplications);
        }
    }

    #[test]
    fn counter_is_deterministic_in_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = invert(&random_spd_generator(7, 3, &mut rng), DEFAULT_PIVOT_TOL).unwrap();
        let b = invert(&random_spd_generator(7, 3, &mut rng), DEFAULT_PIVOT_TOL).unwrap();
        assert_eq!(a.ops, b.ops);
        assert_eq!(a.ops.multiplications, 7 * 120 - 90);
    }

    proptest::proptest! {
        #[test]
        fn counter_within_budget(n in 3usize..40, m in 1usize..6, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ops = invert(&random_spd_generator(n, m, &mut rng), DEFAULT_PIVOT_TOL).unwrap().ops;
            proptest::prop_assert!(ops.multiplications as f64 <= 1.10 * multiplication_budget(n, m) as f64);
        }
    }

    #[test]
    fn component_major_view() {
        let perm = component_major_permutation(3, 2);
        assert_eq!(perm, vec![0, 2, 4, 1, 3, 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let gen = random_spd_generator(5, 2, &mut rng);
        let cm = invert(&gen, DEFAULT_PIVOT_TOL).unwrap().inverse.to_component_major_dense();
        let oracle = invert_dense(&to_component_major(&expand(&gen), 5, 2), DEFAULT_PIVOT_TOL).unwrap();
        assert!(cm.max_abs_diff(&oracle) < 1e-10 * oracle.max_abs());
        // m² tridiagonal n×n blocks
        for bi in 0..2 {
            for bj in 0..2 {
                for r in 0..5usize {
                    for c in 0..5 {
                        if r.abs_diff(c) > 1 {
                            assert_eq!(cm[(bi * 5 + r, bj * 5 + c)], 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn json_layout() {
        let g = eye_pair(1);
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"n":2,"m":1,"K_diag":[[[1.0]],[[1.0]]],"Gamma":[[[0.5]]]}"#);
        let c = invert(&g, DEFAULT_PIVOT_TOL).unwrap().inverse;
        let back: BlockTridiagonalMatrix = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
