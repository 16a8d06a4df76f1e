//! Operator sequences and their positivity tests.
//!
//! A sequence `(T_0, ..., T_N)` of Hermitian matrices is tested through its
//! block Hankel matrix `[T_{i+j}]` (Hamburger), the localizing variants
//! `[T_{i+j} - T_{i+j+2}]` (support in `[-1, 1]`) and `[T_{i+j+1}]` (support in
//! `[0, inf)`), and through the scalar sequences `<T_n x, x>` for sampled
//! unit vectors `x`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    basis_vector, c, inv_sqrt_psd, psd_check, psd_check_real, CMatrix, CVector, HermitianMatrix,
    PsdReport, C64, DEFAULT_RANK_TOL,
};
use crate::verdict::{Verdict, Witness};

/// Terms whose operator norm exceeds this are treated as overflow.
pub const OVERFLOW_LIMIT: f64 = 1e300;

/// Finite prefix `(T_0, ..., T_N)` of an operator sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSequence {
    dim: usize,
    terms: Vec<HermitianMatrix>,
}

impl OperatorSequence {
    pub fn new(terms: Vec<HermitianMatrix>) -> Result<Self> {
        let dim = terms.first().ok_or(Error::Empty("operator sequence"))?.dim();
        if let Some(t) = terms.iter().find(|t| t.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: t.dim(),
            });
        }
        Ok(Self { dim, terms })
    }

    /// One-dimensional sequence from scalar moments.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| HermitianMatrix::diagonal(&[v])).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of terms, `N + 1`.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Index `N` of the last term.
    pub fn last_index(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn terms(&self) -> &[HermitianMatrix] {
        &self.terms
    }

    pub fn term(&self, n: usize) -> &HermitianMatrix {
        &self.terms[n]
    }

    /// The first `len` terms.
    pub fn truncated(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.len() {
            return Err(Error::InsufficientMoments {
                needed: len.saturating_sub(1),
                available: self.last_index(),
            });
        }
        Ok(Self {
            dim: self.dim,
            terms: self.terms[..len].to_vec(),
        })
    }

    pub(crate) fn require(&self, needed: usize) -> Result<()> {
        if needed > self.last_index() {
            return Err(Error::InsufficientMoments {
                needed,
                available: self.last_index(),
            });
        }
        Ok(())
    }

    /// Truncates before the first term whose norm exceeds [`OVERFLOW_LIMIT`].
    /// Returns the surviving prefix and, if truncation happened, the index
    /// that tripped the guard.
    pub fn overflow_guard(&self) -> Result<(Self, Option<usize>)> {
        for (n, t) in self.terms.iter().enumerate() {
            let f = t.frobenius_norm();
            let big = !f.is_finite() || (f > OVERFLOW_LIMIT && t.op_norm()? > OVERFLOW_LIMIT);
            if big {
                if n == 0 {
                    return Err(Error::OverflowRisk {
                        index: 0,
                        magnitude: f,
                    });
                }
                return Ok((self.truncated(n)?, Some(n)));
            }
        }
        Ok((self.clone(), None))
    }
}

/// Flattened block matrix with block `(i, j)` given by `block(i + j)`.
fn block_matrix(dim: usize, order: usize, block: impl Fn(usize) -> CMatrix) -> HermitianMatrix {
    let size = dim * (order + 1);
    let mut m = CMatrix::zeros(size, size);
    for i in 0..=order {
        for j in 0..=order {
            m.view_mut((i * dim, j * dim), (dim, dim))
                .copy_from(&block(i + j));
        }
    }
    HermitianMatrix::symmetrized(m)
}

/// Block Hankel matrix `[T_{i+j}]_{0 <= i, j <= n}`.
#[derive(Clone, Debug)]
pub struct BlockHankel {
    pub order: usize,
    pub dim: usize,
    pub flattened: HermitianMatrix,
}

impl BlockHankel {
    pub fn block(&self, i: usize, j: usize) -> CMatrix {
        self.flattened
            .matrix()
            .view((i * self.dim, j * self.dim), (self.dim, self.dim))
            .into_owned()
    }

    /// `sum_{i,j} <T_{i+j} x_i, x_j>` for the stacked vector `(x_0, ..., x_n)`.
    pub fn quadratic_form(&self, stacked: &CVector) -> f64 {
        self.flattened.quad_form(stacked)
    }
}

pub fn block_hankel(seq: &OperatorSequence, n: usize) -> Result<BlockHankel> {
    seq.require(2 * n)?;
    Ok(BlockHankel {
        order: n,
        dim: seq.dim(),
        flattened: block_matrix(seq.dim(), n, |k| seq.term(k).matrix().clone()),
    })
}

/// PSD test of the block Hankel matrix of order `n`.
pub fn hamburger_check(seq: &OperatorSequence, n: usize, eps: f64) -> Result<PsdReport> {
    psd_check(&block_hankel(seq, n)?.flattened, eps)
}

/// Result of a support-restricted positivity test: the plain Hankel test and
/// the localizing test must both pass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SupportCheck {
    pub hankel: PsdReport,
    pub localizing: PsdReport,
}

impl SupportCheck {
    pub fn is_psd(&self) -> bool {
        self.hankel.is_psd && self.localizing.is_psd
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.hankel.min_eigenvalue.min(self.localizing.min_eigenvalue)
    }
}

/// Support in `[-1, 1]`: blocks `T_{i+j} - T_{i+j+2}` plus the Hankel test.
pub fn hausdorff_check(seq: &OperatorSequence, n: usize, eps: f64) -> Result<SupportCheck> {
    seq.require(2 * n + 2)?;
    let loc = block_matrix(seq.dim(), n, |k| {
        seq.term(k).matrix() - seq.term(k + 2).matrix()
    });
    Ok(SupportCheck {
        hankel: hamburger_check(seq, n, eps)?,
        localizing: psd_check(&loc, eps)?,
    })
}

/// Support in `[0, inf)`: shifted blocks `T_{i+j+1}` plus the Hankel test.
pub fn stieltjes_check(seq: &OperatorSequence, n: usize, eps: f64) -> Result<SupportCheck> {
    seq.require(2 * n + 1)?;
    let loc = block_matrix(seq.dim(), n, |k| seq.term(k + 1).matrix().clone());
    Ok(SupportCheck {
        hankel: hamburger_check(seq, n, eps)?,
        localizing: psd_check(&loc, eps)?,
    })
}

/// Scalar sequence `s_n = <T_n x, x>` for a unit vector `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalizedSequence {
    pub vector: CVector,
    pub values: Vec<f64>,
}

pub fn localize(seq: &OperatorSequence, x: &CVector) -> Result<LocalizedSequence> {
    if x.len() != seq.dim() {
        return Err(Error::DimensionMismatch {
            expected: seq.dim(),
            found: x.len(),
        });
    }
    let norm = x.norm();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::NotUnitVector { norm });
    }
    let values = seq
        .terms()
        .iter()
        .enumerate()
        .map(|(n, t)| {
            let (re, im) = t.quad_form_parts(x);
            if im.abs() > 1e-12 * t.frobenius_norm() + f64::MIN_POSITIVE {
                return Err(Error::NonRealQuadraticForm { index: n, imag: im });
            }
            Ok(re)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LocalizedSequence {
        vector: x.clone(),
        values,
    })
}

/// Real symmetric Hankel matrix `[s_{i+j}]_{0 <= i, j <= n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarHankel {
    pub order: usize,
    pub matrix: DMatrix<f64>,
}

pub fn scalar_hankel(ls: &LocalizedSequence, n: usize) -> Result<ScalarHankel> {
    hankel_from_values(&ls.values, n, 0)
}

/// `[s_{i+j+shift}]`; `shift = 1` gives the Stieltjes localizing matrix.
pub(crate) fn hankel_from_values(values: &[f64], n: usize, shift: usize) -> Result<ScalarHankel> {
    if 2 * n + shift >= values.len() {
        return Err(Error::InsufficientMoments {
            needed: 2 * n + shift,
            available: values.len().saturating_sub(1),
        });
    }
    Ok(ScalarHankel {
        order: n,
        matrix: DMatrix::from_fn(n + 1, n + 1, |i, j| values[i + j + shift]),
    })
}

/// Finite surrogate for "every vector `x`".
#[derive(Clone, Debug, PartialEq)]
pub enum SampleScheme {
    /// All `e_i`, `(e_i +- e_j)/sqrt 2` and `(e_i +- i e_j)/sqrt 2`, followed by
    /// `extra_random` seeded random unit vectors.
    CanonicalPolarized { extra_random: usize, seed: u64 },
    SeededRandom { count: usize, seed: u64 },
    Explicit(Vec<CVector>),
}

impl Default for SampleScheme {
    fn default() -> Self {
        SampleScheme::CanonicalPolarized {
            extra_random: 0,
            seed: 0,
        }
    }
}

impl SampleScheme {
    pub fn canonical() -> Self {
        Self::default()
    }

    pub fn vectors(&self, dim: usize) -> Result<Vec<CVector>> {
        match self {
            SampleScheme::CanonicalPolarized { extra_random, seed } => {
                let mut out = canonical_polarized(dim);
                out.extend(seeded_random(dim, *extra_random, *seed));
                Ok(out)
            }
            SampleScheme::SeededRandom { count, seed } => Ok(seeded_random(dim, *count, *seed)),
            SampleScheme::Explicit(vs) => vs
                .iter()
                .map(|v| {
                    if v.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            found: v.len(),
                        });
                    }
                    crate::linalg::unit(v.clone())
                })
                .collect(),
        }
    }
}

fn canonical_polarized(dim: usize) -> Vec<CVector> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out: Vec<CVector> = (0..dim).map(|i| basis_vector(dim, i)).collect();
    for i in 0..dim {
        for j in (i + 1)..dim {
            for phase in [c(1.0), c(-1.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0)] {
                let mut v = CVector::zeros(dim);
                v[i] = c(s);
                v[j] = phase * s;
                out.push(v);
            }
        }
    }
    out
}

fn seeded_random(dim: usize, count: usize, seed: u64) -> Vec<CVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| crate::random::unit_vector(&mut rng, dim))
        .collect()
}

/// Evaluates `test` at every sample and keeps the worst relative margin.
/// Ties are broken by sample index so the result does not depend on
/// evaluation order.
pub(crate) fn worst_over_samples(
    check: &str,
    samples: &[CVector],
    mut test: impl FnMut(&CVector) -> Result<PsdReport>,
) -> Result<Verdict> {
    let mut worst: Option<(f64, usize, PsdReport)> = None;
    let mut failures = 0usize;
    for (k, x) in samples.iter().enumerate() {
        let r = test(x)?;
        if !r.is_psd {
            failures += 1;
        }
        let key = r.relative_margin();
        let replace = match &worst {
            None => true,
            Some((m, _, _)) => key < *m,
        };
        if replace {
            worst = Some((key, k, r));
        }
    }
    let mut v = Verdict::new(check, failures == 0).metric("samples", samples.len() as f64);
    v = v.metric("failures", failures as f64);
    if let Some((_, k, r)) = worst {
        v = v
            .with_margin(r.min_eigenvalue)
            .with_tolerance(r.tolerance_used)
            .with_witness(Witness::new(k, &samples[k], r.min_eigenvalue));
    }
    Ok(v)
}

/// Checks that every sampled scalar sequence `<T_n x, x>` has a PSD Hankel
/// matrix of order `n`.
pub fn local_moment_check(
    seq: &OperatorSequence,
    scheme: &SampleScheme,
    n: usize,
    eps: f64,
) -> Result<Verdict> {
    seq.require(2 * n)?;
    let samples = scheme.vectors(seq.dim())?;
    let head = seq.truncated(2 * n + 1)?;
    worst_over_samples("local_moment", &samples, |x| {
        let ls = localize(&head, x)?;
        psd_check_real(&scalar_hankel(&ls, n)?.matrix, eps)
    })
    .map(|v| v.metric("order", n as f64))
}

/// Operator norm of each term, computed from the spectrum.
fn norms(seq: &OperatorSequence) -> Result<Vec<f64>> {
    seq.terms().iter().map(|t| t.op_norm()).collect()
}

/// Estimated support radius: the minimum of `|T_{2n}|^{1/(2n)}` over the upper
/// half of the available even indices.
pub fn support_radius(seq: &OperatorSequence) -> Result<f64> {
    let (seq, _) = seq.overflow_guard()?;
    seq.require(4)?;
    let norms = norms(&seq)?;
    let m = seq.last_index() / 2;
    let start = m / 2 + 1;
    let radius = (start..=m)
        .map(|n| {
            let v = norms[2 * n];
            if v == 0.0 {
                0.0
            } else {
                (v.ln() / (2 * n) as f64).exp()
            }
        })
        .fold(f64::INFINITY, f64::min);
    Ok(radius)
}

/// Growth classification of the Carleman partial sums.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    Linear,
    Sublinear,
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CarlemanDiagnostic {
    /// Even indices `2n` whose term entered the sums.
    pub indices: Vec<usize>,
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// Even indices skipped because `T_{2n} = 0`.
    pub skipped_zero: Vec<usize>,
    /// Least-squares slope of the partial sums against `n` over the tail.
    pub growth_rate: f64,
    pub growth: Growth,
    pub truncated_at: Option<usize>,
}

/// Partial sums of `|T_{2n}|^{-1/(2n)}`, n >= 1. Diagnostic only: divergence
/// cannot be decided from a prefix.
pub fn carleman_partial_sums(seq: &OperatorSequence) -> Result<CarlemanDiagnostic> {
    let (seq, truncated_at) = seq.overflow_guard()?;
    seq.require(2)?;
    let norms = norms(&seq)?;
    let mut indices = Vec::new();
    let mut terms = Vec::new();
    let mut skipped_zero = Vec::new();
    for n in 1..=seq.last_index() / 2 {
        let v = norms[2 * n];
        if v == 0.0 {
            skipped_zero.push(2 * n);
            continue;
        }
        indices.push(2 * n);
        terms.push((-v.ln() / (2 * n) as f64).exp());
    }
    let partial_sums: Vec<f64> = terms
        .iter()
        .scan(0.0, |acc, t| {
            *acc += t;
            Some(*acc)
        })
        .collect();

    let k = terms.len();
    let (growth_rate, growth) = if k == 0 {
        (0.0, Growth::Stalled)
    } else {
        let tail_start = k / 2;
        let xs: Vec<f64> = indices[tail_start..].iter().map(|&i| (i / 2) as f64).collect();
        let ys = &partial_sums[tail_start..];
        let slope = if xs.len() < 2 {
            terms[k - 1]
        } else {
            let mx = xs.iter().sum::<f64>() / xs.len() as f64;
            let my = ys.iter().sum::<f64>() / ys.len() as f64;
            let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
            sxy / sxx
        };
        let half = (k / 2).max(1);
        let head_mean = terms[..half].iter().sum::<f64>() / half as f64;
        let tail_mean = terms[k - half..].iter().sum::<f64>() / half as f64;
        let ratio = tail_mean / head_mean;
        let growth = if ratio >= 0.5 {
            Growth::Linear
        } else if ratio >= 0.05 {
            Growth::Sublinear
        } else {
            Growth::Stalled
        };
        (slope, growth)
    };
    Ok(CarlemanDiagnostic {
        indices,
        terms,
        partial_sums,
        skipped_zero,
        growth_rate,
        growth,
        truncated_at,
    })
}

/// `T_n -> T_0^{-1/2} T_n T_0^{-1/2}`.
pub fn normalize(seq: &OperatorSequence) -> Result<OperatorSequence> {
    normalize_with(seq, DEFAULT_RANK_TOL)
}

pub fn normalize_with(seq: &OperatorSequence, rank_tol: f64) -> Result<OperatorSequence> {
    let k = inv_sqrt_psd(seq.term(0), rank_tol)?;
    OperatorSequence::new(
        seq.terms()
            .iter()
            .map(|t| t.congruence(k.matrix()))
            .collect(),
    )
}
