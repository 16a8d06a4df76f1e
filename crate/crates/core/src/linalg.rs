//! Dense Hermitian matrix arithmetic.
//!
//! Every matrix that enters the toolkit as an operator is stored as a
//! [`HermitianMatrix`], which is exactly self-adjoint by construction: raw
//! input is symmetrized as `(A + A*)/2` once its asymmetry has been checked
//! against a relative tolerance. Positivity tests use the relative model
//! `lambda_min >= -eps * max(1, |lambda|_max)` so that sequences whose terms
//! span hundreds of orders of magnitude are judged consistently.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Default relative PSD tolerance.
pub const DEFAULT_PSD_EPS: f64 = 1e-9;
/// Default reconstruction tolerance for eigendecompositions and square roots.
pub const DEFAULT_RECON_EPS: f64 = 1e-10;
/// Default relative rank cutoff for inverse square roots.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;
/// Default relative asymmetry accepted by [`hermitize`].
pub const DEFAULT_HERMITIAN_TOL: f64 = 1e-9;

pub(crate) fn c(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

/// A dense self-adjoint matrix on `C^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    m: CMatrix,
}

impl HermitianMatrix {
    /// Checks `raw` against [`DEFAULT_HERMITIAN_TOL`] and symmetrizes it.
    pub fn new(raw: CMatrix) -> Result<Self> {
        hermitize(&raw, DEFAULT_HERMITIAN_TOL)
    }

    /// Symmetrizes without checking. Used for results of algebra that is
    /// Hermitian in exact arithmetic (congruences, sums of Hermitians).
    pub(crate) fn symmetrized(raw: CMatrix) -> Self {
        let adj = raw.adjoint();
        let mut m = (raw + adj) * c(0.5);
        for i in 0..m.nrows() {
            m[(i, i)].im = 0.0;
        }
        Self { m }
    }

    pub fn from_real(dim: usize, row_major: &[f64]) -> Result<Self> {
        if row_major.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: row_major.len(),
            });
        }
        Self::new(CMatrix::from_fn(dim, dim, |i, j| c(row_major[i * dim + j])))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let d = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::NotSquare {
                rows: d,
                cols: bad.len(),
            });
        }
        Self::new(CMatrix::from_fn(d, d, |i, j| c(rows[i][j])))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: CMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: CMatrix::zeros(dim, dim),
        }
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        Self {
            m: CMatrix::identity(dim, dim) * c(s),
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let d = values.len();
        Self {
            m: CMatrix::from_fn(d, d, |i, j| if i == j { c(values[i]) } else { c(0.0) }),
        }
    }

    /// Rank-one projector `v v*`.
    pub fn outer(v: &CVector) -> Self {
        Self::symmetrized(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    /// Operator norm, computed as the largest eigenvalue modulus.
    pub fn op_norm(&self) -> Result<f64> {
        let e = eig(self)?;
        Ok(e.max_abs())
    }

    /// `<A x, x>`, which is real for Hermitian `A`; the imaginary part is
    /// returned alongside for diagnostics.
    pub fn quad_form_parts(&self, x: &CVector) -> (f64, f64) {
        let ax = &self.m * x;
        let v = x.dotc(&ax);
        (v.re, v.im)
    }

    pub fn quad_form(&self, x: &CVector) -> f64 {
        self.quad_form_parts(x).0
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            m: &self.m * c(s),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            m: &self.m + &other.m,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            m: &self.m - &other.m,
        }
    }

    /// `a * self + b * other`.
    pub fn lincomb(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        Self {
            m: &x.m * c(a) + &y.m * c(b),
        }
    }

    /// `B* A B`, Hermitized.
    pub fn congruence(&self, b: &CMatrix) -> Self {
        Self::symmetrized(b.adjoint() * &self.m * b)
    }

    pub fn mul(&self, other: &Self) -> CMatrix {
        &self.m * &other.m
    }

    /// Entries as `[re, im]` pairs in row-major order.
    pub fn to_pairs(&self) -> Vec<Vec<[f64; 2]>> {
        (0..self.dim())
            .map(|i| {
                (0..self.dim())
                    .map(|j| [self.m[(i, j)].re, self.m[(i, j)].im])
                    .collect()
            })
            .collect()
    }

    pub fn is_real(&self) -> bool {
        self.m.iter().all(|z| z.im == 0.0)
    }
}

/// Checks that `raw` is Hermitian within `tol` (relative to `max(1, |raw|_F)`)
/// and returns its Hermitian part.
pub fn hermitize(raw: &CMatrix, tol: f64) -> Result<HermitianMatrix> {
    if raw.nrows() != raw.ncols() {
        return Err(Error::NotSquare {
            rows: raw.nrows(),
            cols: raw.ncols(),
        });
    }
    if raw.nrows() == 0 {
        return Err(Error::Empty("matrix of dimension 0"));
    }
    if raw.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let asymmetry = (raw - raw.adjoint()).norm();
    let tolerance = tol * raw.norm().max(1.0);
    if asymmetry > tolerance {
        return Err(Error::NotHermitian {
            asymmetry,
            tolerance,
        });
    }
    Ok(HermitianMatrix::symmetrized(raw.clone()))
}

/// Spectral decomposition `A = U diag(lambda) U*` with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct Eigendecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl Eigendecomposition {
    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    pub fn max_abs(&self) -> f64 {
        self.min().abs().max(self.max().abs())
    }

    pub fn vector(&self, k: usize) -> CVector {
        self.eigenvectors.column(k).into_owned()
    }

    /// `U diag(f(lambda)) U*`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> HermitianMatrix {
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            let s = f(lam);
            scaled.column_mut(k).scale_mut(s);
        }
        HermitianMatrix::symmetrized(scaled * u.adjoint())
    }

    pub fn reconstruct(&self) -> HermitianMatrix {
        self.apply(|x| x)
    }
}

/// Hermitian eigendecomposition; eigenvalues ascending.
pub fn eig(a: &HermitianMatrix) -> Result<Eigendecomposition> {
    let d = a.dim();
    let budget = 100 * d.max(1);
    let se = SymmetricEigen::try_new(a.m.clone(), f64::EPSILON, budget).ok_or(
        Error::ConvergenceFailure {
            dim: d,
            iterations: budget,
        },
    )?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let eigenvectors = CMatrix::from_fn(d, d, |r, k| se.eigenvectors[(r, order[k])]);
    Ok(Eigendecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Outcome of a positive-semidefiniteness test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PsdReport {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
    pub max_abs_eigenvalue: f64,
    /// Absolute tolerance that was applied to `min_eigenvalue`.
    pub tolerance_used: f64,
}

impl PsdReport {
    fn from_spectrum(min: f64, max_abs: f64, eps: f64, scale: f64) -> Self {
        let tolerance_used = eps * scale.max(1.0);
        Self {
            is_psd: min >= -tolerance_used,
            min_eigenvalue: min,
            max_abs_eigenvalue: max_abs,
            tolerance_used,
        }
    }

    /// `min_eigenvalue / max(1, |lambda|_max)`: comparable across scales.
    pub fn relative_margin(&self) -> f64 {
        self.min_eigenvalue / self.max_abs_eigenvalue.max(1.0)
    }
}

/// `is_psd <=> lambda_min(A) >= -eps * max(1, |lambda|_max(A))`.
pub fn psd_check(a: &HermitianMatrix, eps: f64) -> Result<PsdReport> {
    let e = eig(a)?;
    Ok(PsdReport::from_spectrum(e.min(), e.max_abs(), eps, e.max_abs()))
}

/// PSD test whose tolerance is scaled by `max(1, scale, |lambda|_max)` instead
/// of the spectrum of `a` alone; used when `a` is a difference of larger terms.
pub fn psd_check_scaled(a: &HermitianMatrix, eps: f64, scale: f64) -> Result<PsdReport> {
    let e = eig(a)?;
    Ok(PsdReport::from_spectrum(
        e.min(),
        e.max_abs(),
        eps,
        scale.max(e.max_abs()),
    ))
}

/// PSD test for a real symmetric matrix (scalar Hankel forms).
pub fn psd_check_real(a: &DMatrix<f64>, eps: f64) -> Result<PsdReport> {
    let n = a.nrows();
    if n == 0 {
        return Err(Error::Empty("matrix of dimension 0"));
    }
    let budget = 100 * n;
    let se = SymmetricEigen::try_new(a.clone(), f64::EPSILON, budget).ok_or(
        Error::ConvergenceFailure {
            dim: n,
            iterations: budget,
        },
    )?;
    let min = se.eigenvalues.min();
    let max_abs = se.eigenvalues.amax();
    Ok(PsdReport::from_spectrum(min, max_abs, eps, max_abs))
}

/// Principal square root. Eigenvalues in `[-eps_abs, 0)` are clamped to zero.
pub fn sqrt_psd(a: &HermitianMatrix) -> Result<HermitianMatrix> {
    sqrt_psd_with(a, DEFAULT_PSD_EPS)
}

pub fn sqrt_psd_with(a: &HermitianMatrix, eps: f64) -> Result<HermitianMatrix> {
    let e = eig(a)?;
    let tolerance = eps * e.max_abs().max(1.0);
    if e.min() < -tolerance {
        return Err(Error::NotPsd {
            min_eigenvalue: e.min(),
            tolerance,
        });
    }
    Ok(e.apply(|x| x.max(0.0).sqrt()))
}

/// `A^{-1/2}` for PSD invertible `A`; fails when
/// `lambda_min <= rank_tol * lambda_max`.
pub fn inv_sqrt_psd(a: &HermitianMatrix, rank_tol: f64) -> Result<HermitianMatrix> {
    let e = eig(a)?;
    let tolerance = DEFAULT_PSD_EPS * e.max_abs().max(1.0);
    if e.min() < -tolerance {
        return Err(Error::NotPsd {
            min_eigenvalue: e.min(),
            tolerance,
        });
    }
    if e.max() <= 0.0 || e.min() <= rank_tol * e.max() {
        return Err(Error::SingularOperator {
            min_eigenvalue: e.min(),
            max_eigenvalue: e.max(),
            rank_tol,
        });
    }
    Ok(e.apply(|x| 1.0 / x.sqrt()))
}

/// Relative Frobenius distance `|a - b|_F / max(|b|_F, floor)`.
pub fn rel_diff(a: &CMatrix, b: &CMatrix, floor: f64) -> f64 {
    (a - b).norm() / b.norm().max(floor)
}

/// Normalizes `v`; errors on a zero vector.
pub fn unit(v: CVector) -> Result<CVector> {
    let n = v.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::NotUnitVector { norm: n });
    }
    Ok(v / c(n))
}

pub fn basis_vector(dim: usize, i: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[i] = c(1.0);
    v
}
