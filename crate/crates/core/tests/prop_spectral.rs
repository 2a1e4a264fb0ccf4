use dtlab::spectral::{
    constructed_pencil, eigenprojection_additivity, generalized_eigenspace, independence_check, kaplansky_check,
    projection_meet_join, random_projection_pair,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn spectral_norm(m: &DMatrix<Complex64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let g = DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im)
    });
    g.qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn eigenvectors_have_small_residual(seed in any::<u64>(), dim in 1usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cp = constructed_pencil(dim, &mut rng).unwrap();
        let (a, b) = (cp.pencil.a(), cp.pencil.b());
        let tol = 1e-9;
        for &(lambda, _) in &cp.eigen {
            let e = generalized_eigenspace(&cp.pencil, lambda, tol).unwrap();
            let scale = spectral_norm(a) + lambda.norm() * spectral_norm(b);
            for j in 0..e.dim() {
                let x = e.columns().column(j).into_owned();
                let r = (a * &x - b * &x * lambda).norm();
                prop_assert!(r <= 10.0 * tol * scale * x.norm());
            }
        }
    }

    #[test]
    fn independence_is_unitarily_invariant(seed in any::<u64>(), dim in 1usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cp = constructed_pencil(dim, &mut rng).unwrap();
        let lambdas: Vec<Complex64> = cp.eigen.iter().map(|e| e.0).collect();
        let before = independence_check(&cp.pencil, &lambdas, 1e-9).unwrap();
        let u = random_unitary(dim, &mut rng);
        let after = independence_check(&cp.pencil.left_mul(&u).unwrap(), &lambdas, 1e-9).unwrap();
        prop_assert_eq!(&before, &after);
        prop_assert!(before.independent);
    }

    #[test]
    fn kaplansky_identity(seed in any::<u64>(), dim in 2usize..=16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, q) = random_projection_pair(dim, &mut rng);
        let (meet, join) = projection_meet_join(&p, &q).unwrap();
        prop_assert_eq!(meet.dim() + join.dim(), p.dim() + q.dim());
        let (lhs, rhs) = kaplansky_check(&p, &q).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn eigenprojections_add(seed in any::<u64>(), dim in 1usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cp = constructed_pencil(dim, &mut rng).unwrap();
        let lambdas: Vec<Complex64> = cp.eigen.iter().map(|e| e.0).collect();
        let (lhs, rhs) = eigenprojection_additivity(&cp.pencil, &lambdas, 1e-9).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }
}
