use mbinv::banded::{self, BandedGeneratorForm};
use mbinv::block::{self, BlockGeneratorForm};
use mbinv::blue::{blue_estimate, LinearMeanModel};
use mbinv::dense::{determinant_dense, invert_dense, DEFAULT_PIVOT_TOL};
use mbinv::kernels::{self, wide_sense_markov_check, Example2dKernel, Kernel, SamplingGrid, ScalarKernel};
use mbinv::scalar::{self, ScalarGeneratorForm, DEFAULT_ALPHA_TOL};
use mbinv::DenseMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spd(n: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
        let x = DenseMatrix::new(n, n, v).unwrap();
        let mut p = x.matmul(&x.transpose()).unwrap();
        for i in 0..n {
            p[(i, i)] += 0.5;
        }
        p
    })
}

fn band_instance() -> impl Strategy<Value = BandedGeneratorForm> {
    (2usize..=10)
        .prop_flat_map(|n| (spd(n), 1usize..=3.min(n - 1)))
        .prop_map(|(p, m)| BandedGeneratorForm::from_dense(&p, m).unwrap())
}

fn grid(max_len: usize) -> impl Strategy<Value = SamplingGrid> {
    (0.05f64..1.0, prop::collection::vec(0.05f64..1.0, 1..max_len)).prop_map(|(t0, steps)| {
        let mut t = t0;
        let mut pts = vec![t];
        for s in steps {
            t += s;
            pts.push(t);
        }
        SamplingGrid::new(pts).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn band_inverse_matches_oracle(k in band_instance()) {
        let (n, m) = (k.n(), k.m());
        let full = banded::expand(&k, DEFAULT_PIVOT_TOL).unwrap();
        let oracle = invert_dense(&full, DEFAULT_PIVOT_TOL).unwrap();
        let inv = banded::invert(&k, DEFAULT_PIVOT_TOL).unwrap();
        let max_diag = (0..n).map(|i| oracle[(i, i)].abs()).fold(0.0, f64::max);
        let scale = oracle.max_abs();
        for i in 0..n {
            for j in 0..n {
                if i.abs_diff(j) > m {
                    prop_assert!(oracle[(i, j)].abs() <= 1e-9 * max_diag);
                } else {
                    prop_assert!((inv.get(i, j) - oracle[(i, j)]).abs() <= 1e-9 * scale);
                }
            }
        }
        let det = banded::determinant(&k, DEFAULT_PIVOT_TOL).unwrap();
        for (p, minor) in det.leading_minors.iter().enumerate() {
            let want = determinant_dense(&full.leading(p + 1)).unwrap();
            prop_assert!((minor - want).abs() <= 1e-9 * want.abs());
        }
    }

    #[test]
    fn banded_connectivity_is_sharp(k in band_instance()) {
        let full = banded::expand(&k, DEFAULT_PIVOT_TOL).unwrap();
        prop_assert!(banded::connectivity_test(&full, k.m(), 1e-9).unwrap().holds);
        prop_assert!(!banded::connectivity_test(&full, k.m() - 1, 1e-9).unwrap().holds);
    }

    #[test]
    fn band_of_width_one_is_the_scalar_path(p in (2usize..=10).prop_flat_map(spd)) {
        let k = BandedGeneratorForm::from_dense(&p, 1).unwrap();
        let full = banded::expand(&k, DEFAULT_PIVOT_TOL).unwrap();
        let tri = scalar::invert(&scalar::compress(&full, 1e-9).unwrap(), DEFAULT_ALPHA_TOL).unwrap();
        let band = banded::invert(&k, DEFAULT_PIVOT_TOL).unwrap();
        for (a, b) in tri.alphas().iter().zip(band.alphas()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs());
        }
        prop_assert!(tri.to_dense().max_abs_diff(&band.to_dense()) <= 1e-12 * tri.to_dense().max_abs());
    }

    #[test]
    fn storage_count_extremes(n in 2usize..200) {
        prop_assert_eq!(banded::storage_count(n, n - 1), n * n);
        prop_assert_eq!(banded::storage_count(n, 1), 3 * n - 2);
    }

    #[test]
    fn block_inverse_matches_oracle(n in 1usize..=6, m in 1usize..=3, seed in any::<u64>()) {
        let gen = block::random_spd_generator(n, m, &mut ChaCha8Rng::seed_from_u64(seed));
        let oracle = invert_dense(&block::expand(&gen), DEFAULT_PIVOT_TOL).unwrap();
        let inv = block::invert(&gen, DEFAULT_PIVOT_TOL).unwrap().inverse;
        let scale = oracle.max_abs();
        let dense = inv.to_dense();
        for bi in 0..n {
            for bj in 0..n {
                let got = dense.submatrix(bi * m, bj * m, m, m);
                let want = oracle.submatrix(bi * m, bj * m, m, m);
                if bi.abs_diff(bj) > 1 {
                    prop_assert!(want.max_abs() <= 1e-8 * scale);
                } else {
                    prop_assert!(got.max_abs_diff(&want) <= 1e-8 * scale);
                }
            }
        }
        for (up, low) in inv.super_blocks().iter().zip(inv.sub_blocks()) {
            prop_assert!(up.transpose().max_abs_diff(low) <= 1e-12);
        }
        let det = block::determinant(&gen, DEFAULT_PIVOT_TOL).unwrap().determinant;
        let want = determinant_dense(&block::expand(&gen)).unwrap();
        prop_assert!((det - want).abs() <= 1e-9 * want.abs());
    }

    #[test]
    fn block_counter_within_model(n in 8usize..60, m in 1usize..=5, seed in any::<u64>()) {
        let gen = block::random_spd_generator(n, m, &mut ChaCha8Rng::seed_from_u64(seed));
        let ops = block::invert(&gen, DEFAULT_PIVOT_TOL).unwrap().ops;
        prop_assert!(ops.multiplications as f64 <= 1.10 * block::op_count_model(n, m).multiplications as f64);
    }

    #[test]
    fn scalar_kernels_compress_to_their_gammas(g in grid(12), sigma2 in 0.1f64..5.0, alpha in 0.05f64..3.0) {
        for k in [ScalarKernel::ou(sigma2, alpha).unwrap(), ScalarKernel::wiener(sigma2).unwrap()] {
            let gen = scalar::compress(&k.covariance(&g).unwrap(), 1e-9).unwrap();
            let gammas = kernels::gamma_coefficients(&k, &g).unwrap();
            for (i, want) in gammas.iter().enumerate() {
                prop_assert!((gen.gamma()[i] - want).abs() <= 1e-12);
                prop_assert!((gen.lambda()[i] - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn coupled_process_blocks(g in grid(8), s1 in 0.3f64..2.0, s2 in 0.3f64..2.0, alpha in 0.2f64..2.0) {
        let k = Example2dKernel::new(s1, s2, alpha).unwrap();
        let closed = kernels::example_2d_blocks(&k, &g).unwrap();
        let (diag, sup) = k.covariance_blocks(&g).unwrap();
        let trans = block::transition_blocks(&diag, &sup, DEFAULT_PIVOT_TOL).unwrap();
        for (a, b) in trans.iter().zip(&closed.gamma) {
            prop_assert!(a.max_abs_diff(b) <= 1e-10);
        }
        let gen = BlockGeneratorForm::new(closed.k_diag.clone(), closed.gamma.clone()).unwrap();
        let inv = block::invert(&gen, DEFAULT_PIVOT_TOL).unwrap().inverse;
        let oracle = invert_dense(&k.covariance(&g).unwrap(), DEFAULT_PIVOT_TOL).unwrap();
        prop_assert!(inv.to_dense().max_abs_diff(&oracle) <= 1e-8 * oracle.max_abs());
    }

    #[test]
    fn markov_check_is_scale_invariant(g in grid(10), c in 1e-3f64..1e3, perturb in any::<bool>()) {
        prop_assume!(g.len() >= 3);
        let base = ScalarKernel::ou(1.0, 0.9).unwrap().covariance(&g).unwrap();
        let mut k = base.clone();
        if perturb {
            let n = g.len();
            k[(0, n - 1)] *= 1.1;
            k[(n - 1, 0)] = k[(0, n - 1)];
        }
        let scaled = k.scale(c);
        let a = wide_sense_markov_check(&Kernel::Scalar(ScalarKernel::table(g.clone(), k).unwrap()), &g, 1e-9).unwrap();
        let b = wide_sense_markov_check(&Kernel::Scalar(ScalarKernel::table(g.clone(), scaled).unwrap()), &g, 1e-9).unwrap();
        prop_assert_eq!(a.holds, b.holds);
        prop_assert_eq!(a.holds, !perturb);
    }

    #[test]
    fn white_noise_gives_ordinary_least_squares(
        z in prop::collection::vec(-5.0f64..5.0, 3..20),
        degree in 0usize..=2,
    ) {
        let n = z.len();
        let pts: Vec<f64> = (0..n).map(|i| i as f64 * 0.3).collect();
        let model = LinearMeanModel::polynomial(&pts, degree).unwrap();
        let white = scalar::invert(&ScalarGeneratorForm::symmetric(vec![1.0; n], vec![0.0; n - 1]).unwrap(), DEFAULT_ALPHA_TOL).unwrap();
        let got = blue_estimate(&model, &z, &white).unwrap();
        let f = model.basis();
        let ft = f.transpose();
        let gram_inv = invert_dense(&ft.matmul(f).unwrap(), DEFAULT_PIVOT_TOL).unwrap();
        let ols = gram_inv.matvec(&ft.matvec(&z).unwrap()).unwrap();
        for (a, b) in got.estimate.iter().zip(&ols) {
            prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
        prop_assert!(got.covariance.max_abs_diff(&gram_inv) <= 1e-12 * gram_inv.max_abs());
    }
}
