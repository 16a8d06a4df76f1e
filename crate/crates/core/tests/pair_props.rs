mod common;

use proptest::prelude::*;

use opmoment::linalg::{CMatrix, HermitianMatrix};
use opmoment::pair::{pencil_bounds, smuljan_factor, solve_pair, two_atomic};
use opmoment::random;

proptest! {
    #![proptest_config(common::config(64))]

    #[test]
    fn pencil_bounds_hold_on_samples(seed in any::<u64>(), dim in 1usize..6) {
        let mut r = common::rng(seed);
        let t0 = random::positive_definite(&mut r, dim, 0.05);
        let t1 = random::hermitian(&mut r, dim);
        let b = pencil_bounds(&t0, &t1).unwrap();
        prop_assert!(b.alpha <= b.beta);
        for _ in 0..32 {
            let x = random::unit_vector(&mut r, dim);
            let (q0, q1) = (t0.quad_form(&x), t1.quad_form(&x));
            let slack = 1e-10 * (1.0 + b.alpha.abs() + b.beta.abs()) * q0.max(1.0);
            prop_assert!(b.alpha * q0 <= q1 + slack);
            prop_assert!(q1 <= b.beta * q0 + slack);
        }
    }

    #[test]
    fn two_atomic_reproduces_pair(seed in any::<u64>(), dim in 1usize..6) {
        let mut r = common::rng(seed);
        let t0 = random::positive_definite(&mut r, dim, 0.05);
        let t1 = random::hermitian(&mut r, dim);
        let sol = solve_pair(&t0, &t1).unwrap();
        prop_assert!(sol.verdict.passed);
        let e = two_atomic(&t0, &t1).unwrap();
        prop_assert_eq!(&e, &sol.measure);
        prop_assert!((e.moment(0).matrix() - t0.matrix()).norm() <= 1e-10 * t0.frobenius_norm());
        prop_assert!((e.moment(1).matrix() - t1.matrix()).norm() <= 1e-10 * t1.frobenius_norm().max(1.0));
    }

    #[test]
    fn smuljan_routes_agree(seed in any::<u64>(), p in 1usize..4, q in 1usize..4, shift in -1.0f64..1.0) {
        let mut r = common::rng(seed);
        let rank = 1 + (seed as usize) % (p + q);
        let g = random::complex_gaussian_matrix(&mut r, p + q, rank);
        let m = &g * g.adjoint();
        let x = HermitianMatrix::new(m.view((0, 0), (p, p)).into_owned()).unwrap();
        let y: CMatrix = m.view((0, p), (p, q)).into_owned();
        // keep clear of the boundary where the tolerance decides
        prop_assume!(shift.abs() > 1e-3);
        let z = HermitianMatrix::new(m.view((p, p), (q, q)).into_owned()).unwrap()
            .add(&HermitianMatrix::scaled_identity(q, shift));
        let rep = smuljan_factor(&x, &y, &z).unwrap();
        prop_assert!(rep.consistent, "{:?}", rep.verdict);
        if shift > 0.0 {
            prop_assert!(rep.block_psd);
        }
        if let Some(w) = rep.factor {
            let half = opmoment::linalg::sqrt_psd(&x).unwrap();
            prop_assert!((half.matrix() * w - &y).norm() <= 1e-6 * y.norm().max(1.0));
        }
    }
}
