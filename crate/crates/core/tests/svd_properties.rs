//! Jacobi SVD invariants and the fused-block subspace identities.

use hmbitcn::rng::{seeded, Normal};
use hmbitcn::svd::{
    linear_identity_residual, pattern_mismatch, principal_angles, shared_pattern_error, svd, Matrix,
};
use proptest::prelude::*;

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut normal = Normal::new(seeded(seed));
    Matrix::from_fn(rows, cols, |_, _| normal.sample())
}

fn orthonormality_error(m: &Matrix) -> f64 {
    let gram = m.transpose().matmul(m).unwrap();
    gram.combine(1.0, &Matrix::identity(m.cols()), -1.0).unwrap().frobenius_norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn factors_reconstruct_and_are_orthonormal(rows in 1usize..12, cols in 1usize..12, seed in 0u64..10_000) {
        let x = gaussian(rows, cols, seed);
        let f = svd(&x).unwrap();
        let err = f.reconstruct().combine(1.0, &x, -1.0).unwrap().frobenius_norm();
        prop_assert!(err <= 1e-12 * (1.0 + x.frobenius_norm()));
        prop_assert!(orthonormality_error(&f.u) < 1e-12);
        prop_assert!(orthonormality_error(&f.v) < 1e-12);
        prop_assert!(f.s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(f.s.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn rank_deficient_input_keeps_orthonormal_u(rows in 3usize..10, seed in 0u64..10_000) {
        let col = gaussian(rows, 1, seed);
        let x = Matrix::from_fn(rows, 3, |i, j| col[(i, 0)] * (j as f64 + 1.0));
        let f = svd(&x).unwrap();
        prop_assert_eq!(f.rank(), 1);
        prop_assert!(orthonormality_error(&f.u) < 1e-12);
    }

    #[test]
    fn frobenius_norm_equals_singular_value_energy(seed in 0u64..10_000) {
        let x = gaussian(7, 5, seed);
        let s = svd(&x).unwrap().s;
        let energy: f64 = s.iter().map(|v| v * v).sum();
        prop_assert!((energy.sqrt() - x.frobenius_norm()).abs() < 1e-12 * x.frobenius_norm());
    }

    #[test]
    fn mismatch_is_invariant_to_positive_scaling_of_back_block(seed in 0u64..10_000, c in 0.1f64..10.0) {
        let x = gaussian(20, 6, seed);
        let scaled = Matrix::from_fn(20, 6, |i, j| if j >= 3 { c * x[(i, j)] } else { x[(i, j)] });
        let p = pattern_mismatch(&x, 3).unwrap();
        let q = pattern_mismatch(&scaled, 3).unwrap();
        prop_assert!((p - q).abs() < 1e-9);
    }
}

#[test]
fn principal_angles_of_rotated_plane() {
    let theta: f64 = 0.3;
    let u1 = Matrix::new(3, 1, vec![1.0, 0.0, 0.0]).unwrap();
    let u2 = Matrix::new(3, 1, vec![theta.cos(), theta.sin(), 0.0]).unwrap();
    let angles = principal_angles(&u1, &u2).unwrap();
    assert!((angles[0] - theta).abs() < 1e-14);
}

#[test]
fn linear_identity_holds_on_random_blocks() {
    for seed in 0..50 {
        let x = gaussian(32, 8, seed);
        let r = linear_identity_residual(&x, 4, 0.7, -1.3).unwrap();
        assert!(r <= 1e-9 * x.frobenius_norm(), "seed {seed}: {r}");
    }
}

#[test]
fn shared_pattern_error_separates_shared_and_independent_blocks() {
    let xi = gaussian(64, 4, 1);
    for c in [1.0, 2.0, -0.5] {
        let x = Matrix::from_fn(64, 8, |i, j| if j < 4 { xi[(i, j)] } else { c * xi[(i, j - 4)] });
        assert!(shared_pattern_error(&x, 4, 1.0, 1.0).unwrap() < 1e-9, "c = {c}");
    }
    let independent = gaussian(64, 8, 2);
    assert!(shared_pattern_error(&independent, 4, 1.0, 1.0).unwrap() > 0.5);
}
