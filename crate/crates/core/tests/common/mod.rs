#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use opmoment::ovm::AtomicOVM;
use opmoment::random;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Positive atomic measure with `count` atoms in `[-3, 3]`, gap at least 0.1.
pub fn measure(seed: u64, dim: usize, count: usize) -> AtomicOVM {
    let mut r = rng(seed);
    let atoms = random::separated_atoms(&mut r, count, 3.0, 0.1);
    random::atomic_measure(&mut r, dim, &atoms)
}

/// Like [`measure`] but with weights of random rank, some possibly zero.
pub fn low_rank_measure(seed: u64, dim: usize, count: usize) -> AtomicOVM {
    let mut r = rng(seed);
    let atoms = random::separated_atoms(&mut r, count, 3.0, 0.1);
    let weights = atoms
        .iter()
        .map(|_| {
            let rank = r.gen_range(0..=dim);
            random::psd_of_rank(&mut r, dim, rank)
        })
        .collect();
    AtomicOVM::new(dim, atoms, weights).unwrap()
}

/// Sum over atoms of `lambda^n <W x, x>`.
pub fn scalar_moment(e: &AtomicOVM, x: &opmoment::CVector, n: usize) -> f64 {
    e.atoms()
        .iter()
        .zip(e.weights())
        .map(|(a, w)| a.powi(n as i32) * w.quad_form(x))
        .sum()
}

pub fn config(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases,
        failure_persistence: None,
        ..Default::default()
    }
}
