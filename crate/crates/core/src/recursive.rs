//! Linear recursive operator sequences: recurrence detection, minimal
//! polynomials, charge recovery by Lagrange interpolation, and the positivity
//! decision for the recovered charge.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    eig, psd_check, psd_check_real, CVector, HermitianMatrix, C64, DEFAULT_PSD_EPS,
};
use crate::moment::{hankel_from_values, localize, worst_over_samples, OperatorSequence, SampleScheme};
use crate::ovm::{atom_merge_tol, is_measure_with, moments, sequence_residual, AtomicOVM};
use crate::verdict::Verdict;

pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-8;
pub const DEFAULT_CHARGE_RESIDUAL_TOL: f64 = 1e-7;
pub const ROOT_REAL_TOL: f64 = 1e-8;
/// Roots closer than this (relative) are reported as repeated. Coarser than
/// the atom merge tolerance because a double root splits by `O(sqrt eps)`.
pub const ROOT_MULTIPLICITY_REL: f64 = 1e-6;

/// Real polynomial with ascending coefficients.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RealPolynomial {
    pub coefficients: Vec<f64>,
}

impl RealPolynomial {
    /// Trailing zeros are trimmed; the zero polynomial keeps a single `0`.
    pub fn new(mut coefficients: Vec<f64>) -> Self {
        while coefficients.len() > 1 && coefficients.last() == Some(&0.0) {
            coefficients.pop();
        }
        if coefficients.is_empty() {
            coefficients.push(0.0);
        }
        Self { coefficients }
    }

    pub fn one() -> Self {
        Self::new(vec![1.0])
    }

    /// `prod (X - r)`.
    pub fn from_roots(roots: &[f64]) -> Self {
        roots.iter().fold(Self::one(), |p, &r| p.mul(&Self::new(vec![-r, 1.0])))
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn leading(&self) -> f64 {
        *self.coefficients.last().unwrap()
    }

    pub fn is_monic(&self) -> bool {
        self.leading() == 1.0
    }

    pub fn monic(&self) -> Result<Self> {
        let lead = self.leading();
        if lead == 0.0 {
            return Err(Error::InvalidArgument("zero polynomial".into()));
        }
        let mut coefficients: Vec<f64> = self.coefficients.iter().map(|c| c / lead).collect();
        *coefficients.last_mut().unwrap() = 1.0;
        Ok(Self { coefficients })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, z: C64) -> C64 {
        self.coefficients
            .iter()
            .rev()
            .fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> Self {
        if self.degree() == 0 {
            return Self::new(vec![0.0]);
        }
        Self::new(
            self.coefficients
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![0.0; self.coefficients.len() + other.coefficients.len() - 1];
        for (i, a) in self.coefficients.iter().enumerate() {
            for (j, b) in other.coefficients.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.coefficients.iter().map(|c| c * s).collect())
    }
}

/// Least-squares recurrence `T_{n+r} = sum_k a_k T_{n+k}` of minimal order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecurrenceFit {
    pub order: usize,
    /// Characteristic polynomial `X^r - sum_k a_k X^k`.
    pub polynomial: RealPolynomial,
    /// Worst window misfit `|sum_k a_k T_{n+k} - T_{n+r}|_F / max_j |T_{n+j}|_F`.
    pub residual: f64,
}

impl RecurrenceFit {
    /// The recurrence coefficients `a_0, ..., a_{r-1}`.
    pub fn recurrence_coefficients(&self) -> Vec<f64> {
        self.polynomial.coefficients[..self.order]
            .iter()
            .map(|c| -c)
            .collect()
    }
}

/// Default search depth: `N / 2`.
pub fn default_r_max(seq: &OperatorSequence) -> usize {
    (seq.last_index() / 2).max(1)
}

/// Finds the smallest `r <= r_max` whose least-squares recurrence has
/// residual at most `residual_tol`.
pub fn fit_recurrence(
    seq: &OperatorSequence,
    r_max: usize,
    residual_tol: f64,
) -> Result<RecurrenceFit> {
    if r_max == 0 {
        return Err(Error::InvalidArgument("r_max must be at least 1".into()));
    }
    seq.require(2 * r_max)?;
    let mut best = f64::INFINITY;
    for r in 1..=r_max {
        let fit = fit_order(seq, r)?;
        if fit.residual <= residual_tol {
            return Ok(fit);
        }
        best = best.min(fit.residual);
    }
    Err(Error::NoRecurrenceFound {
        r_max,
        best_residual: best,
    })
}

/// Real coordinates of a Hermitian matrix: diagonal, then real and imaginary
/// parts of the strict upper triangle.
fn coordinates(t: &HermitianMatrix) -> Vec<f64> {
    let d = t.dim();
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        out.push(t.get(i, i).re);
        for j in (i + 1)..d {
            // off-diagonal entries count twice in the Frobenius norm
            let z = t.get(i, j) * std::f64::consts::SQRT_2;
            out.push(z.re);
            out.push(z.im);
        }
    }
    out
}

fn fit_order(seq: &OperatorSequence, r: usize) -> Result<RecurrenceFit> {
    let n_last = seq.last_index();
    let coords: Vec<Vec<f64>> = seq.terms().iter().map(coordinates).collect();
    let norms: Vec<f64> = seq.terms().iter().map(|t| t.frobenius_norm()).collect();
    let windows: Vec<(usize, f64)> = (0..=n_last - r)
        .map(|n| (n, (n..=n + r).map(|k| norms[k]).fold(0.0, f64::max)))
        .filter(|&(_, s)| s > 0.0)
        .collect();
    if windows.is_empty() {
        // identically zero tail: annihilated by X
        let mut poly = vec![0.0; r + 1];
        poly[r] = 1.0;
        return Ok(RecurrenceFit {
            order: r,
            polynomial: RealPolynomial::new(poly),
            residual: 0.0,
        });
    }
    let m = coords[0].len();
    let rows = windows.len() * m;
    let mut a = DMatrix::<f64>::zeros(rows, r);
    let mut b = DVector::<f64>::zeros(rows);
    for (w, &(n, scale)) in windows.iter().enumerate() {
        for e in 0..m {
            let row = w * m + e;
            for k in 0..r {
                a[(row, k)] = coords[n + k][e] / scale;
            }
            b[row] = coords[n + r][e] / scale;
        }
    }
    let col_scale: Vec<f64> = (0..r)
        .map(|k| {
            let s = a.column(k).norm();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    for (k, s) in col_scale.iter().enumerate() {
        a.column_mut(k).scale_mut(1.0 / s);
    }
    let svd = a.svd(true, true);
    let cutoff = svd.singular_values.max() * 1e-13;
    let y = svd
        .solve(&b, cutoff)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let coeffs: Vec<f64> = (0..r).map(|k| y[k] / col_scale[k]).collect();

    let mut residual = 0.0f64;
    for &(n, scale) in &windows {
        let mut acc = seq.term(n + r).matrix().clone();
        for (k, a_k) in coeffs.iter().enumerate() {
            acc -= seq.term(n + k).matrix() * C64::new(*a_k, 0.0);
        }
        residual = residual.max(acc.norm() / scale);
    }
    let mut poly: Vec<f64> = coeffs.iter().map(|c| -c).collect();
    poly.push(1.0);
    Ok(RecurrenceFit {
        order: r,
        polynomial: RealPolynomial { coefficients: poly },
        residual,
    })
}

/// Roots of a polynomial with real/simple classification.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RootReport {
    /// Sorted by real part, then imaginary part.
    #[serde(serialize_with = "serialize_complex")]
    pub roots: Vec<C64>,
    pub all_real: bool,
    pub simple: bool,
    pub max_imag: f64,
    /// Smallest pairwise distance (infinite for a single root).
    pub min_gap: f64,
}

fn serialize_complex<S: serde::Serializer>(v: &[C64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

impl RootReport {
    pub fn real_parts(&self) -> Vec<f64> {
        self.roots.iter().map(|z| z.re).collect()
    }

    /// A root that has a neighbour within the multiplicity tolerance.
    pub fn repeated_root(&self) -> Option<f64> {
        for i in 0..self.roots.len() {
            for j in (i + 1)..self.roots.len() {
                if (self.roots[i] - self.roots[j]).norm() <= multiplicity_tol(self.roots[i]) {
                    return Some(self.roots[i].re);
                }
            }
        }
        None
    }
}

fn multiplicity_tol(z: C64) -> f64 {
    ROOT_MULTIPLICITY_REL * (1.0 + z.norm())
}

/// Roots from the eigenvalues of the companion matrix, polished by Newton
/// steps when real.
pub fn poly_roots(p: &RealPolynomial) -> Result<RootReport> {
    if p.degree() == 0 {
        return Err(Error::InvalidArgument("polynomial of degree 0 has no roots".into()));
    }
    let p = p.monic()?;
    let r = p.degree();
    let companion = DMatrix::<f64>::from_fn(r, r, |i, j| {
        if j == r - 1 {
            -p.coefficients[i]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let dp = p.derivative();
    let mut roots: Vec<C64> = companion.complex_eigenvalues().iter().copied().collect();
    let max_mod = roots.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let merge = atom_merge_tol(&[max_mod]);
    let mut max_imag = 0.0f64;
    for z in roots.iter_mut() {
        if z.im.abs() <= ROOT_REAL_TOL * (1.0 + z.norm()) {
            let mut x = z.re;
            for _ in 0..3 {
                let d = dp.eval(x);
                if d == 0.0 {
                    break;
                }
                let step = p.eval(x) / d;
                // only accept small corrections: large ones signal a cluster
                if !step.is_finite() || step.abs() > merge {
                    break;
                }
                x -= step;
            }
            *z = C64::new(x, 0.0);
        } else {
            max_imag = max_imag.max(z.im.abs());
        }
    }
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut min_gap = f64::INFINITY;
    for i in 0..r {
        for j in (i + 1)..r {
            min_gap = min_gap.min((roots[i] - roots[j]).norm());
        }
    }
    let mut report = RootReport {
        all_real: max_imag == 0.0,
        simple: true,
        max_imag,
        min_gap,
        roots,
    };
    report.simple = report.repeated_root().is_none();
    Ok(report)
}

/// Monic l.c.m. of polynomials with simple real roots, as the product over
/// the union of their root sets.
pub fn min_poly_lcm(locals: &[RealPolynomial]) -> Result<RealPolynomial> {
    let mut union: Vec<f64> = Vec::new();
    for p in locals {
        if p.degree() == 0 {
            continue;
        }
        let rep = poly_roots(p)?;
        if let Some(near) = rep.repeated_root() {
            return Err(Error::NonSimpleRoots { near });
        }
        if !rep.all_real {
            return Err(Error::NonRealRoots {
                max_imag: rep.max_imag,
            });
        }
        union.extend(rep.real_parts());
    }
    union.sort_by(f64::total_cmp);
    let tol = atom_merge_tol(&union);
    let mut distinct: Vec<f64> = Vec::new();
    for r in union {
        match distinct.last() {
            Some(&prev) if r - prev <= tol => {}
            _ => distinct.push(r),
        }
    }
    Ok(RealPolynomial::from_roots(&distinct))
}

/// Coefficients `c_{ij}` of the Lagrange basis `L_i(X) = sum_j c_{ij} X^j`.
pub fn lagrange_coefficients(nodes: &[f64]) -> Vec<Vec<f64>> {
    nodes
        .iter()
        .enumerate()
        .map(|(i, &li)| {
            let mut p = RealPolynomial::one();
            let mut denom = 1.0;
            for (j, &lj) in nodes.iter().enumerate() {
                if i != j {
                    p = p.mul(&RealPolynomial::new(vec![-lj, 1.0]));
                    denom *= li - lj;
                }
            }
            let mut c = p.scale(1.0 / denom).coefficients;
            c.resize(nodes.len(), 0.0);
            c
        })
        .collect()
}

fn checked_real_roots(fit: &RecurrenceFit) -> Result<Vec<f64>> {
    let rep = poly_roots(&fit.polynomial)?;
    if !rep.all_real {
        return Err(Error::NonRealRoots {
            max_imag: rep.max_imag,
        });
    }
    if let Some(near) = rep.repeated_root() {
        return Err(Error::NonSimpleRoots { near });
    }
    Ok(rep.real_parts())
}

/// `S_i = sum_j c_{ij} T_j`, verified against the whole input.
pub fn recover_charge(seq: &OperatorSequence, fit: &RecurrenceFit) -> Result<AtomicOVM> {
    recover_charge_with(seq, fit, DEFAULT_CHARGE_RESIDUAL_TOL).map(|(e, _)| e)
}

/// As [`recover_charge`], also returning the relative reconstruction residual.
pub fn recover_charge_with(
    seq: &OperatorSequence,
    fit: &RecurrenceFit,
    tolerance: f64,
) -> Result<(AtomicOVM, f64)> {
    let roots = checked_real_roots(fit)?;
    seq.require(roots.len().saturating_sub(1))?;
    let d = seq.dim();
    let weights: Vec<HermitianMatrix> = lagrange_coefficients(&roots)
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(HermitianMatrix::zeros(d), |acc, (j, &c)| {
                    HermitianMatrix::lincomb(1.0, &acc, c, seq.term(j))
                })
        })
        .collect();
    let charge = AtomicOVM::new(d, roots, weights)?;
    let residual = sequence_residual(&moments(&charge, seq.last_index())?, seq);
    if residual > tolerance {
        return Err(Error::ReconstructionMismatch {
            residual,
            tolerance,
        });
    }
    Ok((charge, residual))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub residual_tol: f64,
    pub charge_residual_tol: f64,
    pub eps: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            residual_tol: DEFAULT_RESIDUAL_TOL,
            charge_residual_tol: DEFAULT_CHARGE_RESIDUAL_TOL,
            eps: DEFAULT_PSD_EPS,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecursiveSolution {
    pub fit: RecurrenceFit,
    pub roots: Vec<f64>,
    pub charge: AtomicOVM,
    pub charge_residual: f64,
    /// Passes iff the recovered charge is a measure; children report the
    /// weight test and the sampled localized Hankel test.
    pub is_moment_sequence: Verdict,
}

pub fn solve_recursive(
    seq: &OperatorSequence,
    r_max: usize,
    scheme: &SampleScheme,
) -> Result<RecursiveSolution> {
    solve_recursive_with(seq, r_max, scheme, &SolveOptions::default())
}

pub fn solve_recursive_with(
    seq: &OperatorSequence,
    r_max: usize,
    scheme: &SampleScheme,
    opts: &SolveOptions,
) -> Result<RecursiveSolution> {
    let fit = fit_recurrence(seq, r_max, opts.residual_tol)?;
    let (charge, charge_residual) = recover_charge_with(seq, &fit, opts.charge_residual_tol)?;
    let measure = is_measure_with(&charge, opts.eps)?;

    // The bottom eigenvectors of the weights are where a negative weight
    // shows up in the localized Hankel matrices, so they join the samples.
    let mut samples = scheme.vectors(seq.dim())?;
    samples.extend(min_eigenvectors(charge.weights())?);
    let r = fit.order;
    let head = seq.truncated(2 * (r - 1) + 1)?;
    let local = worst_over_samples("local_hankel", &samples, |x| {
        let ls = localize(&head, x)?;
        psd_check_real(&hankel_from_values(&ls.values, r - 1, 0)?.matrix, opts.eps)
    })?
    .metric("order", (r - 1) as f64);

    if measure.passed != local.passed {
        return Err(Error::CriteriaDisagreement(format!(
            "weights {} but sampled localized Hankel matrices of order {} {}",
            if measure.passed { "are positive" } else { "are not positive" },
            r - 1,
            if local.passed { "are positive" } else { "are not positive" },
        )));
    }
    let roots = charge.atoms().to_vec();
    let verdict = Verdict::all_of("is_moment_sequence", vec![measure, local])
        .metric("order", r as f64)
        .metric("fit_residual", fit.residual)
        .metric("charge_residual", charge_residual);
    Ok(RecursiveSolution {
        fit,
        roots,
        charge,
        charge_residual,
        is_moment_sequence: verdict,
    })
}

fn min_eigenvectors(ws: &[HermitianMatrix]) -> Result<Vec<CVector>> {
    ws.iter()
        .filter(|w| w.frobenius_norm() > 0.0)
        .map(|w| eig(w).map(|e| e.vector(0)))
        .collect()
}

/// Outcome of the order-2 closed-form test.
#[derive(Clone, Debug, PartialEq)]
pub struct Order2Check {
    /// Children: `measure`, `quadratic`, `hankel2`, `cauchy_schwarz`.
    pub verdict: Verdict,
    /// `(T_1 - l2 T_0)/(l1 - l2) delta_l1 + (T_1 - l1 T_0)/(l2 - l1) delta_l2`
    /// when every condition passes.
    pub measure: Option<AtomicOVM>,
}

fn sampled(
    check: &str,
    samples: &[CVector],
    eps: f64,
    f: impl Fn(&CVector) -> (f64, f64),
) -> Result<Verdict> {
    worst_over_samples(check, samples, |x| {
        let (margin, scale) = f(x);
        let tolerance_used = eps * scale.max(1.0);
        Ok(crate::linalg::PsdReport {
            is_psd: margin >= -tolerance_used,
            min_eigenvalue: margin,
            max_abs_eigenvalue: scale,
            tolerance_used,
        })
    })
}

/// Evaluates the four equivalent conditions for an order-2 sequence with
/// characteristic roots `lambda1 < lambda2` and requires them to agree.
pub fn check_order2_closed_form(
    t0: &HermitianMatrix,
    t1: &HermitianMatrix,
    lambda1: f64,
    lambda2: f64,
    scheme: &SampleScheme,
) -> Result<Order2Check> {
    check_order2_closed_form_with(t0, t1, lambda1, lambda2, scheme, DEFAULT_PSD_EPS)
}

pub fn check_order2_closed_form_with(
    t0: &HermitianMatrix,
    t1: &HermitianMatrix,
    lambda1: f64,
    lambda2: f64,
    scheme: &SampleScheme,
    eps: f64,
) -> Result<Order2Check> {
    if !(lambda1 < lambda2) {
        return Err(Error::InvalidArgument(format!(
            "need lambda1 < lambda2, got {lambda1} and {lambda2}"
        )));
    }
    if t0.dim() != t1.dim() {
        return Err(Error::DimensionMismatch {
            expected: t0.dim(),
            found: t1.dim(),
        });
    }
    let (sum, prod) = (lambda1 + lambda2, lambda1 * lambda2);
    let t2 = HermitianMatrix::lincomb(sum, t1, -prod, t0);
    let gap = lambda2 - lambda1;
    let s1 = HermitianMatrix::lincomb(-1.0 / gap, t1, lambda2 / gap, t0);
    let s2 = HermitianMatrix::lincomb(1.0 / gap, t1, -lambda1 / gap, t0);
    let e = AtomicOVM::new(t0.dim(), vec![lambda1, lambda2], vec![s1.clone(), s2.clone()])?;

    let mut samples = scheme.vectors(t0.dim())?;
    samples.extend(min_eigenvectors(&[s1, s2, t0.clone(), t2.clone()])?);
    let forms = |x: &CVector| (t0.quad_form(x), t1.quad_form(x), t2.quad_form(x));

    let measure = is_measure_with(&e, eps)?.with_name("measure");

    let nonneg = sampled("t0_nonnegative", &samples, eps, |x| {
        let a = forms(x).0;
        (a, a.abs())
    })?;
    let quad = sampled("quadratic_inequality", &samples, eps, |x| {
        let (a, b, _) = forms(x);
        let q = b * b - sum * a * b + prod * a * a;
        let scale = (b * b).max((sum * a * b).abs()).max((prod * a * a).abs());
        (-q, scale)
    })?;
    let quadratic = Verdict::all_of("quadratic", vec![nonneg, quad]);

    let hankel2 = worst_over_samples("hankel2", &samples, |x| {
        let (a, b, c) = forms(x);
        psd_check_real(&DMatrix::from_row_slice(2, 2, &[a, b, b, c]), eps)
    })?;

    let p0 = psd_check(t0, eps)?;
    let p2 = psd_check(&t2, eps)?;
    let cs = sampled("sampled", &samples, eps, |x| {
        let (a, b, c) = forms(x);
        (c * a - b * b, (b * b).max((c * a).abs()))
    })?;
    let cauchy_schwarz = Verdict::all_of(
        "cauchy_schwarz",
        vec![
            Verdict::new("t0_psd", p0.is_psd)
                .with_margin(p0.min_eigenvalue)
                .with_tolerance(p0.tolerance_used),
            Verdict::new("t2_psd", p2.is_psd)
                .with_margin(p2.min_eigenvalue)
                .with_tolerance(p2.tolerance_used),
            cs,
        ],
    );

    let flags = [
        measure.passed,
        quadratic.passed,
        hankel2.passed,
        cauchy_schwarz.passed,
    ];
    if flags.iter().any(|&f| f != flags[0]) {
        return Err(Error::ConditionDisagreement(format!(
            "measure={}, quadratic={}, hankel2={}, cauchy_schwarz={}",
            flags[0], flags[1], flags[2], flags[3]
        )));
    }
    let verdict = Verdict::all_of(
        "order2_closed_form",
        vec![measure, quadratic, hankel2, cauchy_schwarz],
    )
    .metric("lambda1", lambda1)
    .metric("lambda2", lambda2);
    let measure = verdict.passed.then_some(e);
    Ok(Order2Check { verdict, measure })
}

/// Eigenvalue gap below which eigenvalues of `T` share an atom.
pub fn eigen_cluster_tol(norm: f64) -> f64 {
    1e-8 * (1.0 + norm)
}

/// Spectral measure of a Hermitian matrix: eigenvalue clusters become atoms
/// carrying the orthogonal projection onto the cluster's eigenspace.
pub fn algebraic_operator_measure(t: &HermitianMatrix) -> Result<AtomicOVM> {
    let e = eig(t)?;
    let tol = eigen_cluster_tol(e.max_abs());
    let mut atoms: Vec<f64> = Vec::new();
    let mut weights: Vec<HermitianMatrix> = Vec::new();
    let mut members: Vec<usize> = Vec::new();
    let d = t.dim();
    let mut flush = |members: &mut Vec<usize>| {
        if members.is_empty() {
            return;
        }
        let mean = members.iter().map(|&k| e.eigenvalues[k]).sum::<f64>() / members.len() as f64;
        let p = members.iter().fold(HermitianMatrix::zeros(d), |acc, &k| {
            acc.add(&HermitianMatrix::outer(&e.vector(k)))
        });
        atoms.push(mean);
        weights.push(p);
        members.clear();
    };
    for k in 0..d {
        if let Some(&last) = members.last() {
            if e.eigenvalues[k] - e.eigenvalues[last] > tol {
                flush(&mut members);
            }
        }
        members.push(k);
    }
    flush(&mut members);
    // clusters are already separated; build without re-merging
    AtomicOVM::from_sorted_parts(d, atoms, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rel_diff, CMatrix};
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn poly(c: &[f64]) -> RealPolynomial {
        RealPolynomial::new(c.to_vec())
    }

    #[test]
    fn fit_single_atom() {
        let seq = OperatorSequence::new(
            (0..6)
                .map(|n| HermitianMatrix::diagonal(&[2f64.powi(n), 3.0 * 2f64.powi(n)]))
                .collect(),
        )
        .unwrap();
        let fit = fit_recurrence(&seq, 2, DEFAULT_RESIDUAL_TOL).unwrap();
        assert_eq!(fit.order, 1);
        assert!((fit.polynomial.coefficients[0] + 2.0).abs() < 1e-12);
        assert_eq!(fit.polynomial.coefficients[1], 1.0);
    }

    #[test]
    fn fit_two_atoms_and_minimality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let e = random::atomic_measure(&mut rng, 2, &[-0.7, 1.3]);
        let seq = moments(&e, 6).unwrap();
        let fit = fit_recurrence(&seq, 3, DEFAULT_RESIDUAL_TOL).unwrap();
        assert_eq!(fit.order, 2);
        let expected = RealPolynomial::from_roots(&[-0.7, 1.3]);
        for (a, b) in fit.polynomial.coefficients.iter().zip(&expected.coefficients) {
            assert!((a - b).abs() < 1e-10);
        }

        let mut weights = e.weights().to_vec();
        weights.push(HermitianMatrix::zeros(2));
        let e3 = AtomicOVM::new(2, vec![-0.7, 1.3, 2.5], weights).unwrap();
        let fit = fit_recurrence(&moments(&e3, 6).unwrap(), 3, DEFAULT_RESIDUAL_TOL).unwrap();
        assert_eq!(fit.order, 2);
    }

    #[test]
    fn lcm_examples() {
        let x1 = poly(&[-1.0, 1.0]);
        let x2 = poly(&[-2.0, 1.0]);
        let both = RealPolynomial::from_roots(&[1.0, 2.0]);
        assert_eq!(min_poly_lcm(&[x1.clone(), x2.clone()]).unwrap(), both);
        assert_eq!(min_poly_lcm(&[both.clone(), x2]).unwrap(), both);
        assert_eq!(min_poly_lcm(&[x1.clone(), x1.clone()]).unwrap(), x1);
        assert!(matches!(
            min_poly_lcm(&[poly(&[1.0, -2.0, 1.0])]),
            Err(Error::NonSimpleRoots { .. })
        ));
    }

    #[test]
    fn root_examples() {
        let r = poly_roots(&poly(&[2.0, -3.0, 1.0])).unwrap();
        assert!(r.all_real && r.simple);
        assert!((r.roots[0].re - 1.0).abs() < 1e-14 && (r.roots[1].re - 2.0).abs() < 1e-14);

        let r = poly_roots(&poly(&[1.0, 0.0, 1.0])).unwrap();
        assert!(!r.all_real);
        assert!((r.max_imag - 1.0).abs() < 1e-14);

        let r = poly_roots(&poly(&[1.0, -2.0, 1.0])).unwrap();
        assert!(!r.simple);
        assert!((r.repeated_root().unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn recover_order_one_and_two() {
        let t0 = HermitianMatrix::from_real_rows(&[&[2.0, 1.0], &[1.0, 3.0]]).unwrap();
        let seq = OperatorSequence::new((0..5).map(|n| t0.scale(1.5f64.powi(n))).collect()).unwrap();
        let fit = fit_recurrence(&seq, 2, DEFAULT_RESIDUAL_TOL).unwrap();
        let e = recover_charge(&seq, &fit).unwrap();
        assert_eq!(e.len(), 1);
        assert!((e.atoms()[0] - 1.5).abs() < 1e-12);
        assert!(rel_diff(e.weights()[0].matrix(), t0.matrix(), 1.0) < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let src = random::atomic_measure(&mut rng, 3, &[-1.0, 2.0]);
        let seq = moments(&src, 5).unwrap();
        let fit = fit_recurrence(&seq, 2, DEFAULT_RESIDUAL_TOL).unwrap();
        let e = recover_charge(&seq, &fit).unwrap();
        let (l1, l2) = (e.atoms()[0], e.atoms()[1]);
        let s1 = HermitianMatrix::lincomb(1.0 / (l1 - l2), seq.term(1), -l2 / (l1 - l2), seq.term(0));
        let s2 = HermitianMatrix::lincomb(1.0 / (l2 - l1), seq.term(1), -l1 / (l2 - l1), seq.term(0));
        assert!(rel_diff(e.weights()[0].matrix(), s1.matrix(), 1.0) < 1e-10);
        assert!(rel_diff(e.weights()[1].matrix(), s2.matrix(), 1.0) < 1e-10);
    }

    #[test]
    fn recover_four_atoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let atoms = [-2.1, -0.4, 0.9, 2.6];
        let src = random::atomic_measure(&mut rng, 5, &atoms);
        let seq = moments(&src, 10).unwrap();
        let fit = fit_recurrence(&seq, 5, DEFAULT_RESIDUAL_TOL).unwrap();
        assert_eq!(fit.order, 4);
        let e = recover_charge(&seq, &fit).unwrap();
        for (a, b) in e.weights().iter().zip(src.weights()) {
            assert!((a.matrix() - b.matrix()).norm() < 1e-6);
        }
    }

    #[test]
    fn solve_projection_measure() {
        let p = HermitianMatrix::diagonal(&[1.0, 0.0, 1.0]);
        let q = HermitianMatrix::diagonal(&[0.0, 1.0, 0.0]);
        let src = AtomicOVM::new(3, vec![0.0, 1.0], vec![p.clone(), q.clone()]).unwrap();
        let sol = solve_recursive(&moments(&src, 4).unwrap(), 2, &SampleScheme::canonical()).unwrap();
        assert!(sol.is_moment_sequence.passed);
        assert_eq!(sol.fit.order, 2);
        assert!(rel_diff(sol.charge.weights()[0].matrix(), p.matrix(), 1.0) < 1e-12);
        assert!(rel_diff(sol.charge.weights()[1].matrix(), q.matrix(), 1.0) < 1e-12);
    }

    #[test]
    fn solve_reports_charge() {
        let bad = HermitianMatrix::from_real_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        let src = AtomicOVM::new(2, vec![-1.0, 1.0], vec![bad, HermitianMatrix::identity(2)]).unwrap();
        let sol = solve_recursive(&moments(&src, 4).unwrap(), 2, &SampleScheme::canonical()).unwrap();
        let v = &sol.is_moment_sequence;
        assert!(!v.passed);
        assert!(!v.child("is_measure").unwrap().passed);
        assert!(v.child("is_measure").unwrap().metrics["atom[0].min_eigenvalue"] < -0.99);
        assert!(!v.child("local_hankel").unwrap().passed);
    }

    #[test]
    fn solve_needs_enough_moments() {
        let seq = crate::gallery::bisgaard_sequence().truncated(3).unwrap();
        assert!(matches!(
            solve_recursive(&seq, 2, &SampleScheme::canonical()),
            Err(Error::InsufficientMoments { .. })
        ));
        // with r_max = 1 the data suffice but no recurrence of order 1 exists
        assert!(matches!(
            solve_recursive(&seq, 1, &SampleScheme::canonical()),
            Err(Error::NoRecurrenceFound { .. })
        ));
    }

    #[test]
    fn order2_examples() {
        let p = HermitianMatrix::diagonal(&[1.0, 0.0]);
        let id = HermitianMatrix::identity(2);
        let r = check_order2_closed_form(&id, &p, 0.0, 1.0, &SampleScheme::canonical()).unwrap();
        assert!(r.verdict.passed);
        let e = r.measure.unwrap();
        assert_eq!(e.weights()[0], id.sub(&p));
        assert_eq!(e.weights()[1], p);

        let r = check_order2_closed_form(
            &id,
            &HermitianMatrix::scaled_identity(2, 3.0),
            0.0,
            1.0,
            &SampleScheme::canonical(),
        )
        .unwrap();
        assert!(!r.verdict.passed && r.measure.is_none());
        assert!(r.verdict.children.iter().all(|c| !c.passed));
    }

    #[test]
    fn order2_needs_sorted_roots() {
        let id = HermitianMatrix::identity(1);
        assert!(check_order2_closed_form(&id, &id, 1.0, 0.0, &SampleScheme::canonical()).is_err());
    }

    #[test]
    fn algebraic_examples() {
        let e = algebraic_operator_measure(&HermitianMatrix::diagonal(&[1.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.atoms(), &[1.0, 2.0]);
        assert_eq!(e.weights()[0], HermitianMatrix::diagonal(&[1.0, 1.0, 0.0]));
        assert_eq!(e.weights()[1], HermitianMatrix::diagonal(&[0.0, 0.0, 1.0]));

        let e = algebraic_operator_measure(&HermitianMatrix::identity(3)).unwrap();
        assert_eq!(e.atoms(), &[1.0]);
        assert_eq!(e.weights()[0], HermitianMatrix::identity(3));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = random::hermitian(&mut rng, 4);
        let e = algebraic_operator_measure(&t).unwrap();
        let cube: CMatrix = t.matrix() * t.matrix() * t.matrix();
        assert!((moments(&e, 3).unwrap().term(3).matrix() - cube).norm() <= 1e-9);
    }

    #[test]
    fn polynomial_basics() {
        let p = RealPolynomial::from_roots(&[1.0, 2.0, 3.0]);
        assert_eq!(p.coefficients, vec![-6.0, 11.0, -6.0, 1.0]);
        assert_eq!(p.eval(2.0), 0.0);
        assert_eq!(p.derivative().coefficients, vec![11.0, -12.0, 3.0]);
        let l = lagrange_coefficients(&[0.0, 1.0]);
        assert_eq!(l, vec![vec![1.0, -1.0], vec![0.0, 1.0]]);
    }
}
