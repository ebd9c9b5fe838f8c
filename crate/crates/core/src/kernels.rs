//! Covariance functions evaluated on sampling grids.
//!
//! Scalar kernels (Wiener, Ornstein-Uhlenbeck, tabulated) produce matrices of
//! the tridiagonal-inverse class; the coupled two-component example process
//! produces a vector Markov covariance with 2x2 blocks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize, Serializer};

use crate::block::markov_block_test;
use crate::dense::{factor_spd, DenseMatrix, LowerTriangularFactor, DEFAULT_PIVOT_TOL};
use crate::error::{Error, Result};
use crate::StructureReport;

/// Strictly increasing sampling instants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct SamplingGrid {
    points: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    points: Vec<f64>,
}

impl TryFrom<GridRepr> for SamplingGrid {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        Self::new(r.points)
    }
}

impl From<SamplingGrid> for GridRepr {
    fn from(g: SamplingGrid) -> Self {
        GridRepr { points: g.points }
    }
}

impl SamplingGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("grid is empty".into()));
        }
        if let Some(i) = points.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid(format!("point {} is not finite", i + 1)));
        }
        if let Some(i) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!("points {} and {} are not increasing", i + 1, i + 2)));
        }
        Ok(Self { points })
    }

    /// `t_i = i·τ` for `i = 1..n`.
    pub fn uniform(tau: f64, n: usize) -> Result<Self> {
        if tau.is_nan() || tau <= 0.0 {
            return Err(Error::InvalidGrid("spacing must be positive".into()));
        }
        Self::new((1..=n).map(|i| i as f64 * tau).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `1 − e^{−x}` without cancellation for small `x`.
fn one_minus_exp(x: f64) -> f64 {
    -(-x).exp_m1()
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be a positive finite number, got {v}")))
    }
}

/// Scalar covariance function.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarKernel {
    /// `σ²·min(s, t)`
    Wiener { sigma2: f64 },
    /// `σ²·exp(−α|s − t|)`
    Ou { sigma2: f64, alpha: f64 },
    /// Values tabulated on a fixed grid.
    Table { grid: SamplingGrid, values: DenseMatrix },
}

impl ScalarKernel {
    pub fn wiener(sigma2: f64) -> Result<Self> {
        positive("sigma2", sigma2)?;
        Ok(Self::Wiener { sigma2 })
    }

    pub fn ou(sigma2: f64, alpha: f64) -> Result<Self> {
        positive("sigma2", sigma2)?;
        positive("alpha", alpha)?;
        Ok(Self::Ou { sigma2, alpha })
    }

    pub fn table(grid: SamplingGrid, values: DenseMatrix) -> Result<Self> {
        if values.rows() != grid.len() || values.cols() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "table is {}x{} but grid has {} points",
                values.rows(),
                values.cols(),
                grid.len()
            )));
        }
        Ok(Self::Table { grid, values })
    }

    /// Covariance matrix `{k(t_i, t_j)}`.
    pub fn covariance(&self, grid: &SamplingGrid) -> Result<DenseMatrix> {
        let t = grid.points();
        let n = t.len();
        match self {
            Self::Wiener { sigma2 } => Ok(DenseMatrix::from_fn(n, n, |i, j| sigma2 * t[i].min(t[j]))),
            Self::Ou { sigma2, alpha } => Ok(DenseMatrix::from_fn(n, n, |i, j| sigma2 * (-alpha * (t[i] - t[j]).abs()).exp())),
            Self::Table { grid: own, values } => {
                if own != grid {
                    return Err(Error::InvalidGrid("tabulated kernel is only defined on its own grid".into()));
                }
                Ok(values.clone())
            }
        }
    }
}

/// Two-component process `x_1 = σ_1·W(t)`, `dx_2 = −α·x_2·dt + σ_2·dW(t)`
/// driven by the same Wiener process and started at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example2dKernel {
    sigma1: f64,
    sigma2: f64,
    alpha: f64,
}

impl Example2dKernel {
    pub fn new(sigma1: f64, sigma2: f64, alpha: f64) -> Result<Self> {
        positive("sigma1", sigma1)?;
        positive("sigma2", sigma2)?;
        positive("alpha", alpha)?;
        Ok(Self { sigma1, sigma2, alpha })
    }

    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// 2x2 covariance `K(s, t)`; `s = t` uses the `s < t` branches.
    pub fn eval(&self, s: f64, t: f64) -> DenseMatrix {
        let Self { sigma1: s1, sigma2: s2, alpha: a } = *self;
        let e = |x: f64| (-a * x).exp();
        let om = |x: f64| one_minus_exp(a * x);
        // e^{−αu} − e^{−αv} = e^{−αu}·(1 − e^{−α(v−u)}) avoids cancellation near t = 0
        let k11 = s1 * s1 * s.min(t);
        let k22 = s2 * s2 / (2.0 * a) * e((s - t).abs()) * om(2.0 * s.min(t));
        let k12 = if s <= t { s1 * s2 / a * e(t - s) * om(s) } else { s1 * s2 / a * om(t) };
        let k21 = if s <= t { s1 * s2 / a * om(s) } else { s1 * s2 / a * e(s - t) * om(t) };
        DenseMatrix::from_rows(&[[k11, k12], [k21, k22]]).expect("2x2")
    }

    fn require_positive_grid(grid: &SamplingGrid) -> Result<()> {
        if grid.points()[0] <= 0.0 {
            return Err(Error::InvalidGrid("the coupled process has zero variance at t <= 0".into()));
        }
        Ok(())
    }

    /// `K_ii` and `K_{i,i+1}` blocks.
    pub fn covariance_blocks(&self, grid: &SamplingGrid) -> Result<(Vec<DenseMatrix>, Vec<DenseMatrix>)> {
        Self::require_positive_grid(grid)?;
        let t = grid.points();
        let diag = t.iter().map(|&ti| self.eval(ti, ti)).collect();
        let sup = t.windows(2).map(|w| self.eval(w[0], w[1])).collect();
        Ok((diag, sup))
    }

    /// Full point-major `2n`x`2n` covariance.
    pub fn covariance(&self, grid: &SamplingGrid) -> Result<DenseMatrix> {
        Self::require_positive_grid(grid)?;
        let t = grid.points();
        let n = t.len();
        let mut out = DenseMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let b = self.eval(t[i], t[j]);
                for r in 0..2 {
                    for c in 0..2 {
                        out[(2 * i + r, 2 * j + c)] = b[(r, c)];
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Any supported covariance function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpec", into = "KernelSpec")]
pub enum Kernel {
    Scalar(ScalarKernel),
    Example2d(Example2dKernel),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum KernelSpec {
    Ou { sigma2: f64, alpha: f64 },
    Wiener { sigma2: f64 },
    Example2d { sigma1: f64, sigma2: f64, alpha: f64 },
    Table { grid: Vec<f64>, values: Vec<Vec<f64>> },
}

impl TryFrom<KernelSpec> for Kernel {
    type Error = Error;

    fn try_from(s: KernelSpec) -> Result<Self> {
        Ok(match s {
            KernelSpec::Ou { sigma2, alpha } => Kernel::Scalar(ScalarKernel::ou(sigma2, alpha)?),
            KernelSpec::Wiener { sigma2 } => Kernel::Scalar(ScalarKernel::wiener(sigma2)?),
            KernelSpec::Example2d { sigma1, sigma2, alpha } => Kernel::Example2d(Example2dKernel::new(sigma1, sigma2, alpha)?),
            KernelSpec::Table { grid, values } => {
                Kernel::Scalar(ScalarKernel::table(SamplingGrid::new(grid)?, DenseMatrix::from_rows(&values)?)?)
            }
        })
    }
}

impl From<Kernel> for KernelSpec {
    fn from(k: Kernel) -> Self {
        match k {
            Kernel::Scalar(ScalarKernel::Ou { sigma2, alpha }) => KernelSpec::Ou { sigma2, alpha },
            Kernel::Scalar(ScalarKernel::Wiener { sigma2 }) => KernelSpec::Wiener { sigma2 },
            Kernel::Scalar(ScalarKernel::Table { grid, values }) => {
                KernelSpec::Table { grid: grid.points, values: values.to_rows() }
            }
            Kernel::Example2d(e) => KernelSpec::Example2d { sigma1: e.sigma1, sigma2: e.sigma2, alpha: e.alpha },
        }
    }
}

impl Kernel {
    /// Components per sampling instant.
    pub fn dim(&self) -> usize {
        match self {
            Kernel::Scalar(_) => 1,
            Kernel::Example2d(_) => 2,
        }
    }

    /// Full point-major covariance on the grid.
    pub fn dense_covariance(&self, grid: &SamplingGrid) -> Result<DenseMatrix> {
        match self {
            Kernel::Scalar(k) => k.covariance(grid),
            Kernel::Example2d(k) => k.covariance(grid),
        }
    }
}

/// Grid evaluation of a kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Scalar(DenseMatrix),
    /// Diagonal and first super-diagonal blocks.
    Blocks { diag: Vec<DenseMatrix>, super_diag: Vec<DenseMatrix> },
}

pub fn covariance_matrix(kernel: &Kernel, grid: &SamplingGrid) -> Result<Covariance> {
    match kernel {
        Kernel::Scalar(k) => Ok(Covariance::Scalar(k.covariance(grid)?)),
        Kernel::Example2d(k) => {
            let (diag, super_diag) = k.covariance_blocks(grid)?;
            Ok(Covariance::Blocks { diag, super_diag })
        }
    }
}

/// `γ_i = k(t_i, t_{i+1}) / k(t_i, t_i)`.
pub fn gamma_coefficients(kernel: &ScalarKernel, grid: &SamplingGrid) -> Result<Vec<f64>> {
    let k = kernel.covariance(grid)?;
    (0..grid.len() - 1)
        .map(|i| {
            let v = k[(i, i)];
            if v <= 0.0 {
                return Err(Error::ZeroVariance { index: i + 1 });
            }
            Ok(k[(i, i + 1)] / v)
        })
        .collect()
}

/// Checks `K(s,t) = K(s,τ)·K(τ,τ)⁻¹·K(τ,t)` for every ordered triple of grid
/// points to `tol · max|K|`. Report indices are 1-based grid positions.
pub fn wide_sense_markov_check(kernel: &Kernel, grid: &SamplingGrid, tol: f64) -> Result<StructureReport> {
    if grid.len() < 3 {
        return Err(Error::InvalidGrid("the Markov check needs at least 3 points".into()));
    }
    let k = kernel.dense_covariance(grid)?;
    markov_check_matrix(&k, kernel.dim(), tol)
}

/// Same check on an already evaluated point-major covariance with `m`
/// components per instant.
pub fn markov_check_matrix(k: &DenseMatrix, m: usize, tol: f64) -> Result<StructureReport> {
    if m == 1 {
        let n = k.rows();
        let mut report = StructureReport::new(tol * k.max_abs());
        for tau in 1..n.saturating_sub(1) {
            let v = k[(tau, tau)];
            if v <= 0.0 {
                return Err(Error::ZeroVariance { index: tau + 1 });
            }
            for s in 0..tau {
                for t in tau + 1..n {
                    report.record(s + 1, t + 1, (k[(s, t)] - k[(s, tau)] * k[(tau, t)] / v).abs());
                }
            }
        }
        Ok(report)
    } else {
        markov_block_test(k, m, tol).map_err(|e| match e {
            Error::SingularDiagonalBlock { index } => Error::ZeroVariance { index },
            other => other,
        })
    }
}

fn ser_block<S: Serializer>(b: &DenseMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    b.to_rows().serialize(s)
}

fn ser_blocks<S: Serializer>(b: &[DenseMatrix], s: S) -> std::result::Result<S::Ok, S::Error> {
    b.iter().map(DenseMatrix::to_rows).collect::<Vec<_>>().serialize(s)
}

/// Closed-form blocks of the coupled two-component process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example2dBlocks {
    #[serde(rename = "K_diag", serialize_with = "ser_blocks")]
    pub k_diag: Vec<DenseMatrix>,
    #[serde(rename = "K_super", serialize_with = "ser_blocks")]
    pub k_super: Vec<DenseMatrix>,
    #[serde(rename = "Gamma", serialize_with = "ser_blocks")]
    pub gamma: Vec<DenseMatrix>,
    #[serde(rename = "A", serialize_with = "ser_blocks")]
    pub a: Vec<DenseMatrix>,
    #[serde(rename = "A_inv", serialize_with = "ser_blocks")]
    pub a_inv: Vec<DenseMatrix>,
    #[serde(rename = "M", serialize_with = "ser_blocks")]
    pub m: Vec<DenseMatrix>,
    #[serde(rename = "det_A")]
    pub det_a: Vec<f64>,
}

fn sym2(a: f64, b: f64, d: f64) -> DenseMatrix {
    DenseMatrix::from_rows(&[[a, b], [b, d]]).expect("2x2")
}

/// Innovation covariance of the process over a step `Δ` with `γ = e^{−αΔ}`:
/// `(1/α)·[[α·σ_1²·Δ, σ_1σ_2(1−γ)], [σ_1σ_2(1−γ), σ_2²(1−γ²)/2]]`.
fn innovation(k: &Example2dKernel, delta: f64) -> DenseMatrix {
    let (s1, s2, a) = (k.sigma1, k.sigma2, k.alpha);
    sym2(s1 * s1 * delta, s1 * s2 * one_minus_exp(a * delta) / a, s2 * s2 * one_minus_exp(2.0 * a * delta) / (2.0 * a))
}

fn innovation_det(k: &Example2dKernel, delta: f64) -> f64 {
    let (s1, s2, a) = (k.sigma1, k.sigma2, k.alpha);
    s1 * s1 * s2 * s2 / a * (delta / 2.0 * one_minus_exp(2.0 * a * delta) - one_minus_exp(a * delta).powi(2) / a)
}

/// Closed forms of `K_ii, K_{i,i+1}, Γ_i, A_i, A_i⁻¹, M_i, det A_i` for the
/// coupled process. `A_i` and `M_i` are the one- and two-step innovation
/// covariances, with `t_0 = 0`.
pub fn example_2d_blocks(kernel: &Example2dKernel, grid: &SamplingGrid) -> Result<Example2dBlocks> {
    Example2dKernel::require_positive_grid(grid)?;
    let (s1, s2, a) = (kernel.sigma1, kernel.sigma2, kernel.alpha);
    let t = grid.points();
    let e = |x: f64| (-a * x).exp();
    let om = |x: f64| one_minus_exp(a * x);

    let k_diag: Vec<DenseMatrix> =
        t.iter().map(|&ti| sym2(s1 * s1 * ti, s1 * s2 / a * om(ti), s2 * s2 / (2.0 * a) * om(2.0 * ti))).collect();
    let k_super = t
        .windows(2)
        .map(|w| {
            let (ti, tj) = (w[0], w[1]);
            DenseMatrix::from_rows(&[
                [s1 * s1 * ti, s1 * s2 / a * e(tj - ti) * om(ti)],
                [s1 * s2 / a * om(ti), s2 * s2 / (2.0 * a) * e(tj - ti) * om(2.0 * ti)],
            ])
            .expect("2x2")
        })
        .collect();
    let gamma = t.windows(2).map(|w| DenseMatrix::diagonal(&[1.0, e(w[1] - w[0])])).collect();

    let prev = |i: usize| if i == 0 { 0.0 } else { t[i - 1] };
    let a_blocks: Vec<DenseMatrix> = (0..t.len()).map(|i| innovation(kernel, t[i] - prev(i))).collect();
    let det_a: Vec<f64> = (0..t.len()).map(|i| innovation_det(kernel, t[i] - prev(i))).collect();
    let a_inv = a_blocks
        .iter()
        .zip(&det_a)
        .map(|(b, d)| sym2(b[(1, 1)] / d, -b[(0, 1)] / d, b[(0, 0)] / d))
        .collect();
    let m = (0..t.len().saturating_sub(1)).map(|i| innovation(kernel, t[i + 1] - prev(i))).collect();

    Ok(Example2dBlocks { k_diag, k_super, gamma, a: a_blocks, a_inv, m, det_a })
}

/// Uniform-grid (`t_i = i·τ`) closed forms for `σ_1 = σ_2 = σ`, where every
/// `Γ_i`, `A_i` and `M_i` coincide.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformExample2d {
    #[serde(rename = "Gamma", serialize_with = "ser_block")]
    pub gamma: DenseMatrix,
    #[serde(rename = "A", serialize_with = "ser_block")]
    pub a: DenseMatrix,
    #[serde(rename = "A_inv", serialize_with = "ser_block")]
    pub a_inv: DenseMatrix,
    #[serde(rename = "M", serialize_with = "ser_block")]
    pub m: DenseMatrix,
    #[serde(rename = "det_A")]
    pub det_a: f64,
}

pub fn uniform_example_2d(sigma: f64, alpha: f64, tau: f64) -> Result<UniformExample2d> {
    positive("sigma", sigma)?;
    positive("alpha", alpha)?;
    positive("tau", tau)?;
    let g = (-alpha * tau).exp();
    let c = sigma * sigma / alpha;
    let a = sym2(c * alpha * tau, c * (1.0 - g), c * (1.0 - g * g) / 2.0);
    let m = sym2(c * 2.0 * alpha * tau, c * (1.0 - g * g), c * (1.0 - g.powi(4)) / 2.0);
    let det_a = sigma.powi(4) / (alpha * alpha) * (1.0 - g) * (alpha * tau * (1.0 + g) / 2.0 - (1.0 - g));
    let a_inv = sym2(a[(1, 1)] / det_a, -a[(0, 1)] / det_a, a[(0, 0)] / det_a);
    Ok(UniformExample2d { gamma: DenseMatrix::diagonal(&[1.0, g]), a, a_inv, m, det_a })
}

/// Zero-mean Gaussian draws with a kernel's covariance on a grid.
#[derive(Debug, Clone)]
pub struct PathSampler {
    factor: LowerTriangularFactor,
}

impl PathSampler {
    pub fn new(kernel: &Kernel, grid: &SamplingGrid) -> Result<Self> {
        Self::from_covariance(&kernel.dense_covariance(grid)?)
    }

    pub fn from_covariance(k: &DenseMatrix) -> Result<Self> {
        Ok(Self { factor: factor_spd(k, DEFAULT_PIVOT_TOL)? })
    }

    /// One draw `L·ξ`, `ξ` standard normal.
    pub fn draw(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        let n = self.factor.matrix().rows();
        let xi: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        self.factor.mul_vec(&xi)
    }
}

/// One draw, deterministic in `seed`. Vector processes come out point-major.
pub fn sample_path(kernel: &Kernel, grid: &SamplingGrid, seed: u64) -> Result<Vec<f64>> {
    let sampler = PathSampler::new(kernel, grid)?;
    Ok(sampler.draw(&mut ChaCha8Rng::seed_from_u64(seed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block;
    use crate::scalar;

    fn grid(p: &[f64]) -> SamplingGrid {
        SamplingGrid::new(p.to_vec()).unwrap()
    }

    #[test]
    fn scalar_covariance_examples() {
        let w = Kernel::Scalar(ScalarKernel::wiener(1.0).unwrap());
        let k = w.dense_covariance(&grid(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(k, DenseMatrix::from_rows(&[[1.0, 1.0, 1.0], [1.0, 2.0, 2.0], [1.0, 2.0, 3.0]]).unwrap());
        let ou = ScalarKernel::ou(1.0, 1.0).unwrap();
        let k = ou.covariance(&grid(&[0.0, 1.0])).unwrap();
        let e = (-1.0f64).exp();
        assert_eq!(k, DenseMatrix::from_rows(&[[1.0, e], [e, 1.0]]).unwrap());
    }

    #[test]
    fn example2d_single_point() {
        let k = Example2dKernel::new(1.0, 1.0, 1.0).unwrap();
        let Covariance::Blocks { diag, .. } = covariance_matrix(&Kernel::Example2d(k), &grid(&[1.0])).unwrap() else {
            panic!("expected blocks");
        };
        let e1 = (-1.0f64).exp();
        let want = sym2(1.0, 1.0 - e1, (1.0 - (-2.0f64).exp()) / 2.0);
        assert!(diag[0].max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn grid_validation() {
        assert!(SamplingGrid::new(vec![1.0, 1.0]).is_err());
        assert!(SamplingGrid::new(vec![]).is_err());
        let k = Example2dKernel::new(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(k.covariance_blocks(&grid(&[0.0, 1.0])), Err(Error::InvalidGrid(_))));
        assert!(matches!(example_2d_blocks(&k, &grid(&[-1.0, 1.0])), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn gamma_examples() {
        let g = gamma_coefficients(&ScalarKernel::ou(1.0, 0.7).unwrap(), &SamplingGrid::uniform(0.3, 5).unwrap()).unwrap();
        for v in &g {
            assert!((v - (-0.7f64 * 0.3).exp()).abs() < 1e-15);
        }
        let g = gamma_coefficients(&ScalarKernel::wiener(1.0).unwrap(), &grid(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(g, vec![1.0, 1.0]);
        let gr = grid(&[0.1, 0.4, 1.3]);
        let a = gamma_coefficients(&ScalarKernel::ou(1.0, 2.0).unwrap(), &gr).unwrap();
        let b = gamma_coefficients(&ScalarKernel::ou(7.5, 2.0).unwrap(), &gr).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        let zero = gamma_coefficients(&ScalarKernel::wiener(1.0).unwrap(), &grid(&[0.0, 1.0]));
        assert!(matches!(zero, Err(Error::ZeroVariance { index: 1 })));
    }

    #[test]
    fn markov_check_examples() {
        let gr = grid(&[0.2, 0.9, 1.1, 2.5, 4.0]);
        for k in [Kernel::Scalar(ScalarKernel::ou(2.0, 0.8).unwrap()), Kernel::Scalar(ScalarKernel::wiener(1.5).unwrap())] {
            assert!(wide_sense_markov_check(&k, &gr, 1e-9).unwrap().holds);
        }
        let k2 = Kernel::Example2d(Example2dKernel::new(1.0, 1.0, 1.0).unwrap());
        assert!(wide_sense_markov_check(&k2, &grid(&[0.5, 1.0, 2.0]), 1e-9).unwrap().holds);
        assert!(wide_sense_markov_check(&k2, &grid(&[0.5, 1.0]), 1e-9).is_err());
    }

    #[test]
    fn scalar_kernels_compress_with_their_gammas() {
        let gr = grid(&[0.3, 0.5, 1.4, 2.0, 2.2, 3.9]);
        for k in [ScalarKernel::ou(1.3, 0.4).unwrap(), ScalarKernel::wiener(0.7).unwrap()] {
            let gen = scalar::compress(&k.covariance(&gr).unwrap(), 1e-9).unwrap();
            let g = gamma_coefficients(&k, &gr).unwrap();
            for (i, gi) in g.iter().enumerate() {
                assert!((gen.gamma()[i] - gi).abs() < 1e-12);
                assert!((gen.lambda()[i] - gi).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_forms_match_kernel_evaluation() {
        let k = Example2dKernel::new(1.3, 0.6, 0.9).unwrap();
        let gr = grid(&[0.4, 0.7, 1.5, 1.6, 3.0]);
        let cf = example_2d_blocks(&k, &gr).unwrap();
        let (diag, sup) = k.covariance_blocks(&gr).unwrap();
        for (a, b) in cf.k_diag.iter().zip(&diag) {
            assert!(a.max_abs_diff(b) < 1e-12);
        }
        for (a, b) in cf.k_super.iter().zip(&sup) {
            assert!(a.max_abs_diff(b) < 1e-12);
        }
        let trans = block::transition_blocks(&diag, &sup, DEFAULT_PIVOT_TOL).unwrap();
        for (a, b) in cf.gamma.iter().zip(&trans) {
            assert!(a.max_abs_diff(b) < 1e-10);
        }
        let gen = block::BlockGeneratorForm::new(cf.k_diag.clone(), cf.gamma.clone()).unwrap();
        let inv = block::invert(&gen, DEFAULT_PIVOT_TOL).unwrap().inverse;
        for i in 0..gr.len() {
            assert!(inv.a_blocks()[i].max_abs_diff(&cf.a[i]) < 1e-12);
            let d = cf.a[i][(0, 0)] * cf.a[i][(1, 1)] - cf.a[i][(0, 1)].powi(2);
            assert!((d - cf.det_a[i]).abs() < 1e-12);
            let prod = cf.a[i].matmul(&cf.a_inv[i]).unwrap();
            assert!(prod.max_abs_diff(&DenseMatrix::identity(2)) < 1e-9);
        }
        for i in 0..gr.len() - 1 {
            assert!(inv.m_blocks()[i].max_abs_diff(&cf.m[i]) < 1e-12);
        }
        assert!(cf.a[0].max_abs_diff(&cf.k_diag[0]) < 1e-15);
    }

    #[test]
    fn uniform_closed_forms_agree_with_general() {
        let (s, a, tau) = (0.8, 1.7, 0.25);
        let u = uniform_example_2d(s, a, tau).unwrap();
        let cf = example_2d_blocks(&Example2dKernel::new(s, s, a).unwrap(), &SamplingGrid::uniform(tau, 4).unwrap()).unwrap();
        for i in 0..4 {
            assert!(cf.a[i].max_abs_diff(&u.a) < 1e-14);
            assert!((cf.det_a[i] - u.det_a).abs() < 1e-14);
            assert!(cf.a_inv[i].max_abs_diff(&u.a_inv) < 1e-9 * u.a_inv.max_abs());
        }
        for i in 0..3 {
            assert!(cf.gamma[i].max_abs_diff(&u.gamma) < 1e-15);
            assert!(cf.m[i].max_abs_diff(&u.m) < 1e-14);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let k = Kernel::Scalar(ScalarKernel::ou(1.0, 1.0).unwrap());
        let gr = SamplingGrid::uniform(0.5, 6).unwrap();
        assert_eq!(sample_path(&k, &gr, 42).unwrap(), sample_path(&k, &gr, 42).unwrap());
        assert_ne!(sample_path(&k, &gr, 42).unwrap(), sample_path(&k, &gr, 43).unwrap());
        let one = sample_path(&k, &grid(&[1.0]), 1).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn sample_covariance_converges() {
        let k = Kernel::Scalar(ScalarKernel::ou(1.0, 1.0).unwrap());
        let gr = SamplingGrid::uniform(0.3, 10).unwrap();
        let cov = k.dense_covariance(&gr).unwrap();
        let sampler = PathSampler::new(&k, &gr).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 5000;
        let mut acc = DenseMatrix::zeros(10, 10);
        for _ in 0..draws {
            let x = sampler.draw(&mut rng);
            for i in 0..10 {
                for j in 0..10 {
                    acc[(i, j)] += x[i] * x[j];
                }
            }
        }
        for i in 0..10 {
            for j in 0..10 {
                let est = acc[(i, j)] / draws as f64;
                let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / draws as f64).sqrt();
                assert!((est - cov[(i, j)]).abs() <= 3.0 * se + 1e-12, "({i},{j}) {est} vs {}", cov[(i, j)]);
            }
        }
    }

    #[test]
    fn kernel_json() {
        let k: Kernel = serde_json::from_str(r#"{"kind":"ou","sigma2":1.0,"alpha":2.0}"#).unwrap();
        assert_eq!(k, Kernel::Scalar(ScalarKernel::Ou { sigma2: 1.0, alpha: 2.0 }));
        let k: Kernel = serde_json::from_str(r#"{"kind":"example2d","sigma1":1.0,"sigma2":0.5,"alpha":2.0}"#).unwrap();
        assert_eq!(k.dim(), 2);
        let k: Kernel = serde_json::from_str(r#"{"kind":"table","grid":[1,2],"values":[[1,0],[0,1]]}"#).unwrap();
        assert_eq!(serde_json::to_string(&k).unwrap(), r#"{"kind":"table","grid":[1.0,2.0],"values":[[1.0,0.0],[0.0,1.0]]}"#);
        assert!(serde_json::from_str::<Kernel>(r#"{"kind":"ou","sigma2":-1.0,"alpha":2.0}"#).is_err());
        let g: SamplingGrid = serde_json::from_str(r#"{"points":[0.5,1.0]}"#).unwrap();
        assert_eq!(g.len(), 2);
    }
}
