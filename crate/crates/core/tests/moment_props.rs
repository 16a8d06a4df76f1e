mod common;

use proptest::prelude::*;

use opmoment::linalg::{sqrt_psd, CVector, DEFAULT_PSD_EPS};
use opmoment::moment::{
    block_hankel, hamburger_check, hausdorff_check, local_moment_check, localize, normalize,
    scalar_hankel, stieltjes_check, SampleScheme,
};
use opmoment::ovm::moments;
use opmoment::random;
use opmoment::C64;

proptest! {
    #![proptest_config(common::config(48))]

    #[test]
    fn block_form_matches_measure_oracle(seed in any::<u64>(), dim in 1usize..4, count in 1usize..4, n in 0usize..3) {
        let e = common::measure(seed, dim, count);
        let seq = moments(&e, 2 * n).unwrap();
        let h = block_hankel(&seq, n).unwrap();
        let mut r = common::rng(seed ^ 1);
        let stacked = random::unit_vector(&mut r, dim * (n + 1));
        // sum_k | sum_i lambda_k^i W_k^{1/2} x_i |^2
        let mut oracle = 0.0;
        for (a, w) in e.atoms().iter().zip(e.weights()) {
            let root = sqrt_psd(w).unwrap();
            let mut acc = CVector::zeros(dim);
            for i in 0..=n {
                let xi = stacked.rows(i * dim, dim).into_owned();
                acc += root.matrix() * xi * C64::new(a.powi(i as i32), 0.0);
            }
            oracle += acc.norm_squared();
        }
        let form = h.quadratic_form(&stacked);
        prop_assert!((form - oracle).abs() <= 1e-10 * (1.0 + oracle.abs()), "{form} vs {oracle}");
        prop_assert!(hamburger_check(&seq, n, DEFAULT_PSD_EPS).unwrap().is_psd);
    }

    #[test]
    fn localized_values_are_scalar_moments(seed in any::<u64>(), dim in 1usize..5, count in 1usize..5) {
        let e = common::measure(seed, dim, count);
        let seq = moments(&e, 6).unwrap();
        let x = random::unit_vector(&mut common::rng(seed ^ 2), dim);
        let ls = localize(&seq, &x).unwrap();
        for (k, v) in ls.values.iter().enumerate() {
            let expect = common::scalar_moment(&e, &x, k);
            prop_assert!((v - expect).abs() <= 1e-10 * (1.0 + expect.abs()));
        }
        let sh = scalar_hankel(&ls, 3).unwrap();
        prop_assert_eq!(sh.matrix.nrows(), 4);
    }

    #[test]
    fn block_positivity_implies_local_positivity(seed in any::<u64>(), dim in 1usize..4, count in 1usize..4, shift in -0.5f64..0.5) {
        // perturb the middle term so that both outcomes of the block test occur
        let e = common::measure(seed, dim, count);
        let mut terms = moments(&e, 4).unwrap().terms().to_vec();
        terms[2] = terms[2].add(&opmoment::HermitianMatrix::scaled_identity(dim, shift));
        let seq = opmoment::OperatorSequence::new(terms).unwrap();
        let scheme = SampleScheme::CanonicalPolarized { extra_random: 16, seed };
        for n in 1..=2 {
            if hamburger_check(&seq, n, DEFAULT_PSD_EPS).unwrap().is_psd {
                prop_assert!(local_moment_check(&seq, &scheme, n, DEFAULT_PSD_EPS).unwrap().passed);
            }
        }
    }

    #[test]
    fn support_checks_follow_atom_locations(seed in any::<u64>(), dim in 1usize..4, count in 1usize..4) {
        let mut r = common::rng(seed);
        let atoms: Vec<f64> = random::separated_atoms(&mut r, count, 1.0, 0.1)
            .into_iter()
            .map(|a| 0.5 * (a + 1.0))
            .collect();
        let e = random::atomic_measure(&mut r, dim, &atoms);
        let seq = moments(&e, 6).unwrap();
        prop_assert!(stieltjes_check(&seq, 2, DEFAULT_PSD_EPS).unwrap().is_psd());
        prop_assert!(hausdorff_check(&seq, 2, DEFAULT_PSD_EPS).unwrap().is_psd());

        // mirrored to [-1, 0): still Hausdorff, no longer Stieltjes unless all atoms are 0
        let mirrored = opmoment::AtomicOVM::new(dim, atoms.iter().map(|a| -(0.05 + 0.95 * a)).collect(), e.weights().to_vec()).unwrap();
        let seq = moments(&mirrored, 6).unwrap();
        prop_assert!(hausdorff_check(&seq, 2, DEFAULT_PSD_EPS).unwrap().is_psd());
        prop_assert!(!stieltjes_check(&seq, 2, DEFAULT_PSD_EPS).unwrap().is_psd());
    }

    #[test]
    fn normalization_gives_identity_mass(seed in any::<u64>(), dim in 1usize..4, count in 1usize..4) {
        let e = common::measure(seed, dim, count);
        let seq = normalize(&moments(&e, 4).unwrap()).unwrap();
        let id = opmoment::HermitianMatrix::identity(dim);
        prop_assert!((seq.term(0).matrix() - id.matrix()).norm() <= 1e-10);
        prop_assert!(hamburger_check(&seq, 2, DEFAULT_PSD_EPS).unwrap().is_psd);
    }
}
