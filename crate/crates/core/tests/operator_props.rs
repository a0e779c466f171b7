use feshbach::instance::{gaussian_matrix, random_isometry, seeded_rng};
use feshbach::operator::{
    column_space, identity, kernel_basis, op_norm, restricted_inverse, restricted_map,
    singular_values, Subspace,
};
use feshbach::{Complex64, ComplexMatrix, Tolerances};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

/// `sqrt(λ_max(MᴴM))` through the Hermitian eigensolver, a code path
/// independent of the SVD.
fn norm_oracle(m: &ComplexMatrix) -> f64 {
    let g = m.adjoint() * m;
    let g = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
    SymmetricEigen::new(g).eigenvalues.iter().copied().fold(0.0, f64::max).max(0.0).sqrt()
}

fn low_rank(seed: u64, rows: usize, cols: usize, rank: usize) -> ComplexMatrix {
    let mut rng = seeded_rng(seed);
    gaussian_matrix(&mut rng, rows, rank) * gaussian_matrix(&mut rng, rank, cols)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn op_norm_matches_eigen_oracle(seed in any::<u64>(), rows in 1usize..12, cols in 1usize..12) {
        let m = gaussian_matrix(&mut seeded_rng(seed), rows, cols);
        let got = op_norm(&m);
        let want = norm_oracle(&m);
        prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
    }

    #[test]
    fn op_norm_scales_and_ignores_adjoint(seed in any::<u64>(), n in 1usize..10, re in -5.0f64..5.0, im in -5.0f64..5.0) {
        let m = gaussian_matrix(&mut seeded_rng(seed), n, n + 1);
        let s = Complex64::new(re, im);
        let base = op_norm(&m);
        prop_assert!((op_norm(&(&m * s)) - s.norm() * base).abs() <= 1e-12 * (1.0 + s.norm() * base));
        prop_assert!((op_norm(&m.adjoint()) - base).abs() <= 1e-12 * (1.0 + base));
    }

    #[test]
    fn singular_values_descending_and_nonnegative(seed in any::<u64>(), rows in 1usize..10, cols in 1usize..10) {
        let s = singular_values(&gaussian_matrix(&mut seeded_rng(seed), rows, cols));
        prop_assert_eq!(s.len(), rows.min(cols));
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn kernel_and_range_of_low_rank(seed in any::<u64>(), rows in 2usize..12, cols in 2usize..12, rank in 1usize..6) {
        let tol = Tolerances::default();
        let rank = rank.min(rows).min(cols);
        let m = low_rank(seed, rows, cols, rank);
        let scale = op_norm(&m);

        let k = kernel_basis(&m, &tol);
        prop_assert_eq!(k.dim(), cols - rank);
        let kb = k.basis();
        prop_assert!(op_norm(&(kb.adjoint() * kb - identity(k.dim()))) < 1e-12);
        prop_assert!(op_norm(&(&m * kb)) <= 1e-12 * scale);

        let r = column_space(&m, &tol);
        prop_assert_eq!(r.dim(), rank);
        prop_assert!(r.leak_of(&m) <= 1e-12 * scale);
    }

    #[test]
    fn canonical_gauge_depends_only_on_the_subspace(seed in any::<u64>(), n in 2usize..10, k in 1usize..9) {
        let tol = Tolerances::default();
        let k = k.min(n - 1);
        let mut rng = seeded_rng(seed);
        let q = random_isometry(&mut rng, n, k);
        // Two different spanning sets of the same subspace.
        let a = column_space(&q, &tol);
        let b = column_space(&(&q * gaussian_matrix(&mut rng, k, k + 2)), &tol);
        prop_assert!(op_norm(&(a.basis() - b.basis())) < 1e-9);
    }

    #[test]
    fn restricted_inverse_on_invariant_subspace(seed in any::<u64>(), n in 2usize..10, k in 1usize..9) {
        let tol = Tolerances::default();
        let k = k.min(n - 1);
        let mut rng = seeded_rng(seed);
        let u = random_isometry(&mut rng, n, n);
        // Block upper triangular in the basis u: span of the first k columns
        // is invariant.
        let mut blocks = gaussian_matrix(&mut rng, n, n) + identity(n) * Complex64::new(4.0, 0.0);
        for i in k..n {
            for j in 0..k {
                blocks[(i, j)] = Complex64::new(0.0, 0.0);
            }
        }
        let a = &u * blocks * u.adjoint();
        let v = Subspace::from_orthonormal(u.columns(0, k).into_owned()).unwrap();
        prop_assert!(restricted_map(&a, &v).unwrap().leak < 1e-12 * op_norm(&a));
        let g = restricted_inverse(&a, &v, &tol).unwrap();
        let b = v.basis();
        prop_assert!(op_norm(&(&g * &a * b - b)) < 1e-11);
        prop_assert!(op_norm(&(&a * &g * b - b)) < 1e-11);
        let complement = u.columns(k, n - k).into_owned();
        prop_assert!(op_norm(&(&g * complement)) < 1e-12);
    }
}

#[test]
fn permutation_norm_is_one() {
    let z = Complex64::new(0.0, 0.0);
    let o = Complex64::new(1.0, 0.0);
    let p = ComplexMatrix::from_row_slice(2, 2, &[z, o, o, z]);
    assert!((op_norm(&p) - 1.0).abs() < 1e-15);
}

#[test]
fn structured_rank_deficient_bases() {
    // Exact zeros next to a clustered spectrum; singular vectors of such
    // matrices are where a careless SVD loses accuracy.
    let tol = Tolerances::default();
    let mut rng = seeded_rng(3);
    let s = identity(8) + gaussian_matrix(&mut rng, 8, 8) * Complex64::new(0.1, 0.0);
    let s_inv = s.clone().try_inverse().unwrap();
    let d: Vec<Complex64> = [1.0, 0.99, 0.98, 0.5, 0.0, 0.0, 0.0, 0.0]
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .collect();
    let m = &s * ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)) * s_inv;
    let r = column_space(&m, &tol);
    assert_eq!(r.dim(), 4);
    assert!(r.leak_of(&m) < 1e-13);
    let k = kernel_basis(&m, &tol);
    assert_eq!(k.dim(), 4);
    assert!(op_norm(&(&m * k.basis())) < 1e-13);
}
