//! Seeded generators for random test inputs: Hermitian and PSD matrices,
//! unitaries, unit vectors and atomic measures.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{c, CMatrix, CVector, HermitianMatrix, C64};
use crate::ovm::AtomicOVM;

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn complex_gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| C64::new(gaussian(rng), gaussian(rng)))
}

/// Uniformly distributed unit vector in `C^dim`.
pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CVector {
    loop {
        let v = CVector::from_fn(dim, |_, _| C64::new(gaussian(rng), gaussian(rng)));
        let n = v.norm();
        if n > 1e-8 {
            return v / c(n);
        }
    }
}

pub fn hermitian<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> HermitianMatrix {
    let g = complex_gaussian_matrix(rng, dim, dim);
    HermitianMatrix::symmetrized(g * c(0.5_f64.sqrt()))
}

/// `G G* / cols` with `G` of size `dim x rank`.
pub fn psd_of_rank<R: Rng + ?Sized>(rng: &mut R, dim: usize, rank: usize) -> HermitianMatrix {
    if rank == 0 {
        return HermitianMatrix::zeros(dim);
    }
    let g = complex_gaussian_matrix(rng, dim, rank);
    HermitianMatrix::symmetrized(&g * g.adjoint() * c(1.0 / rank as f64))
}

/// Well-conditioned positive definite matrix: `G G*/d + shift I`.
pub fn positive_definite<R: Rng + ?Sized>(rng: &mut R, dim: usize, shift: f64) -> HermitianMatrix {
    let p = psd_of_rank(rng, dim, dim);
    p.add(&HermitianMatrix::scaled_identity(dim, shift))
}

/// Haar-ish unitary from the QR factorization of a complex Gaussian matrix.
pub fn unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
    let g = complex_gaussian_matrix(rng, dim, dim);
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut u = q;
    for k in 0..dim {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / c(d.norm()) } else { c(1.0) };
        for i in 0..dim {
            u[(i, k)] *= phase;
        }
    }
    u
}

/// `count` atoms in `[-bound, bound]` with pairwise gap at least `gap`.
pub fn separated_atoms<R: Rng + ?Sized>(rng: &mut R, count: usize, bound: f64, gap: f64) -> Vec<f64> {
    'outer: loop {
        let mut atoms: Vec<f64> = (0..count).map(|_| rng.gen_range(-bound..=bound)).collect();
        atoms.sort_by(f64::total_cmp);
        for w in atoms.windows(2) {
            if w[1] - w[0] < gap {
                continue 'outer;
            }
        }
        return atoms;
    }
}

/// Atomic measure with full-rank positive definite weights.
pub fn atomic_measure<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    atoms: &[f64],
) -> AtomicOVM {
    let weights = atoms
        .iter()
        .map(|_| positive_definite(rng, dim, 0.2))
        .collect();
    AtomicOVM::new(dim, atoms.to_vec(), weights).expect("separated atoms")
}

/// Semi-spectral measure `W_k = S^{-1/2} A_k S^{-1/2}` with `S = sum A_k`.
pub fn semispectral_smeared<R: Rng + ?Sized>(rng: &mut R, dim: usize, atoms: &[f64]) -> AtomicOVM {
    let raw: Vec<HermitianMatrix> = atoms
        .iter()
        .map(|_| positive_definite(rng, dim, 0.1))
        .collect();
    let total = raw
        .iter()
        .fold(HermitianMatrix::zeros(dim), |acc, a| acc.add(a));
    let k = crate::linalg::inv_sqrt_psd(&total, 1e-14).expect("positive definite sum");
    let weights = raw.iter().map(|a| a.congruence(k.matrix())).collect();
    AtomicOVM::new(dim, atoms.to_vec(), weights).expect("separated atoms")
}

/// Projection-valued measure: the columns of a random unitary are dealt out
/// to the atoms (some atoms may receive none).
pub fn projection_valued<R: Rng + ?Sized>(rng: &mut R, dim: usize, atoms: &[f64]) -> AtomicOVM {
    let u = unitary(rng, dim);
    let mut weights = vec![HermitianMatrix::zeros(dim); atoms.len()];
    for k in 0..dim {
        let slot = rng.gen_range(0..atoms.len());
        let col: CVector = u.column(k).into_owned();
        weights[slot] = weights[slot].add(&HermitianMatrix::outer(&col));
    }
    AtomicOVM::new(dim, atoms.to_vec(), weights).expect("separated atoms")
}
