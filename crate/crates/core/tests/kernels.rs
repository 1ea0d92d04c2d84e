use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sgpts::kernels::{mercer_truncate, rff_sample, tail_mass, BoxDomain, KernelSpec, MaternNu};

fn spec_for(family: u8, d: usize, ell: f64, var: f64) -> KernelSpec {
    let ls = vec![ell; d];
    match family {
        0 => KernelSpec::se(ls, var),
        1 => KernelSpec::matern(MaternNu::ThreeHalves, ls, var),
        _ => KernelSpec::matern(MaternNu::FiveHalves, ls, var),
    }
    .unwrap()
}

fn min_eig(m: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m).eigenvalues.min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_is_symmetric_psd(
        family in 0u8..3,
        d in 1usize..4,
        ell in 0.05f64..2.0,
        var in 0.1f64..=1.0,
        raw in prop::collection::vec(0.0f64..1.0, 36),
    ) {
        let k = spec_for(family, d, ell, var);
        let pts: Vec<Vec<f64>> = raw.chunks(3).map(|c| c[..d].to_vec()).collect();
        let g = DMatrix::from_fn(pts.len(), pts.len(), |i, j| k.value(&pts[i], &pts[j]));
        prop_assert!((&g - g.transpose()).amax() == 0.0);
        prop_assert!(min_eig(g) >= -1e-9 * var * pts.len() as f64);
    }

    #[test]
    fn stationary_and_bounded_by_variance(
        family in 0u8..3,
        ell in 0.05f64..2.0,
        x in prop::collection::vec(-3.0f64..3.0, 2),
        y in prop::collection::vec(-3.0f64..3.0, 2),
        shift in prop::collection::vec(-3.0f64..3.0, 2),
    ) {
        let k = spec_for(family, 2, ell, 0.7);
        let kxy = k.value(&x, &y);
        prop_assert!(kxy <= 0.7 + 1e-12 && kxy >= 0.0);
        prop_assert!((k.value(&x, &x) - 0.7).abs() < 1e-12);
        let xs: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let ys: Vec<f64> = y.iter().zip(&shift).map(|(a, b)| a + b).collect();
        prop_assert!((k.value(&xs, &ys) - kxy).abs() < 1e-12);
        prop_assert_eq!(kxy, k.value(&y, &x));
    }
}

#[test]
fn se_matches_direct_formula() {
    let k = KernelSpec::se(vec![0.3, 0.7], 0.5).unwrap();
    let (x, y) = ([0.1, 0.9], [0.4, 0.2]);
    let r2 = (0.3f64 / 0.3).powi(2) + (0.7f64 / 0.7).powi(2);
    assert!((k.value(&x, &y) - 0.5 * (-0.5 * r2).exp()).abs() < 1e-14);
}

#[test]
fn matern_matches_direct_formula() {
    let k32 = KernelSpec::matern(MaternNu::ThreeHalves, vec![0.5], 1.0).unwrap();
    let k52 = KernelSpec::matern(MaternNu::FiveHalves, vec![0.5], 1.0).unwrap();
    let r: f64 = 0.3 / 0.5;
    let s3 = 3f64.sqrt() * r;
    let s5 = 5f64.sqrt() * r;
    assert!((k32.value(&[0.0], &[0.3]) - (1.0 + s3) * (-s3).exp()).abs() < 1e-14);
    assert!((k52.value(&[0.0], &[0.3]) - (1.0 + s5 + s5 * s5 / 3.0) * (-s5).exp()).abs() < 1e-14);
}

/// On the diagonal the truncation error is exactly the dropped eigenpairs'
/// contribution, and it is dominated by the sup-norm tail mass.
#[test]
fn mercer_diagonal_error_is_the_dropped_tail() {
    for (d, ell, m) in [(1usize, 0.3, 8usize), (1, 0.1, 20), (2, 0.4, 30)] {
        let k = KernelSpec::se(vec![ell; d], 1.0).unwrap();
        let domain = BoxDomain::cube(d, 0.0, 1.0).unwrap();
        let big = mercer_truncate(&k, 600, &domain).unwrap();
        let delta = tail_mass(&big, m, 600).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
        for _ in 0..50 {
            let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let err = k.value(&x, &x) - big.reconstruct(&x, &x, m).unwrap();
            let phi = big.features(&x).unwrap();
            let dropped: f64 = (m..600).map(|j| big.weights()[j] * phi[j] * phi[j]).sum();
            // Eigenpairs past 600 are below double precision at these lengthscales.
            assert!((err - dropped).abs() < 1e-9, "d={d} ell={ell}: {err} vs {dropped}");
            assert!(err >= -1e-12 && err <= delta + 1e-12, "err {err} exceeds tail {delta}");
        }
    }
}

#[test]
fn mercer_off_diagonal_error_within_tail() {
    let k = KernelSpec::se(vec![0.2], 0.8).unwrap();
    let domain = BoxDomain::cube(1, -1.0, 2.0).unwrap();
    let fm = mercer_truncate(&k, 60, &domain).unwrap();
    for m in [5, 10, 20, 40] {
        let delta = tail_mass(&fm, m, 60).unwrap();
        for i in 0..40 {
            let x = [-1.0 + 3.0 * i as f64 / 39.0];
            let y = [0.7];
            let err = (k.value(&x, &y) - fm.reconstruct(&x, &y, m).unwrap()).abs();
            assert!(err <= delta + 1e-12, "m={m}: {err} > {delta}");
        }
    }
}

#[test]
fn tail_mass_is_non_increasing() {
    let k = KernelSpec::se(vec![0.15, 0.3], 1.0).unwrap();
    let fm = mercer_truncate(&k, 200, &BoxDomain::cube(2, 0.0, 1.0).unwrap()).unwrap();
    let tails: Vec<f64> = (0..=200).map(|m| tail_mass(&fm, m, 200).unwrap()).collect();
    assert!(tails.windows(2).all(|w| w[1] <= w[0]));
    assert!(tails[200] >= 0.0);
}

fn median_abs_error(k: &KernelSpec, count: usize, seed: u64) -> f64 {
    let fm = rff_sample(k, count, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut errs: Vec<f64> = (0..100)
        .map(|_| {
            let x: Vec<f64> = (0..2).map(|_| rng.random::<f64>()).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.random::<f64>()).collect();
            (k.value(&x, &y) - fm.reconstruct(&x, &y, count).unwrap()).abs()
        })
        .collect();
    errs.sort_by(f64::total_cmp);
    0.5 * (errs[49] + errs[50])
}

#[test]
fn rff_error_shrinks_with_more_features() {
    for k in [spec_for(0, 2, 0.3, 1.0), spec_for(1, 2, 0.3, 1.0), spec_for(2, 2, 0.3, 1.0)] {
        let small = median_abs_error(&k, 250, 5);
        let large = median_abs_error(&k, 4000, 5);
        assert!(large < small, "{:?}: {large} !< {small}", k.family());
    }
}

#[test]
fn rff_features_reproduce_with_seed() {
    let k = spec_for(0, 3, 0.5, 1.0);
    let a = rff_sample(&k, 64, 11).unwrap();
    let b = rff_sample(&k, 64, 11).unwrap();
    let c = rff_sample(&k, 64, 12).unwrap();
    let x = [0.1, 0.2, 0.3];
    assert_eq!(a.features(&x).unwrap(), b.features(&x).unwrap());
    assert_ne!(a.features(&x).unwrap(), c.features(&x).unwrap());
}
