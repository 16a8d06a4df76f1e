//! The two-moment problem `(T_0, T_1)`: pencil bounds, the 2-atomic
//! representing measure, and the block factorization test.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    c, eig, inv_sqrt_psd, psd_check, psd_check_scaled, rel_diff, CMatrix, HermitianMatrix,
    DEFAULT_PSD_EPS, DEFAULT_RANK_TOL,
};
use crate::ovm::{is_measure, AtomicOVM};
use crate::verdict::Verdict;

/// `alpha T_0 <= T_1 <= beta T_0` with the tightest constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PencilBounds {
    pub alpha: f64,
    pub beta: f64,
}

impl PencilBounds {
    pub fn degenerate_gap(&self) -> f64 {
        1e-10 * (1.0 + self.alpha.abs() + self.beta.abs())
    }

    pub fn is_degenerate(&self) -> bool {
        self.beta - self.alpha <= self.degenerate_gap()
    }
}

/// Extreme eigenvalues of `T_0^{-1/2} T_1 T_0^{-1/2}`.
///
/// Both operators are first congruence-scaled by `diag(T_0)^{-1/2}`, which
/// leaves the pencil spectrum unchanged and removes diagonal scale spread
/// before the invertibility test.
pub fn pencil_bounds(t0: &HermitianMatrix, t1: &HermitianMatrix) -> Result<PencilBounds> {
    let k = normalized_pencil(t0, t1)?;
    let e = eig(&k)?;
    Ok(PencilBounds {
        alpha: e.min(),
        beta: e.max(),
    })
}

fn normalized_pencil(t0: &HermitianMatrix, t1: &HermitianMatrix) -> Result<HermitianMatrix> {
    if t0.dim() != t1.dim() {
        return Err(Error::DimensionMismatch {
            expected: t0.dim(),
            found: t1.dim(),
        });
    }
    let d = t0.dim();
    let diag: Vec<f64> = (0..d).map(|i| t0.get(i, i).re).collect();
    if let Some(&bad) = diag.iter().find(|&&v| !(v > 0.0)) {
        let max = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return Err(Error::SingularOperator {
            min_eigenvalue: bad,
            max_eigenvalue: max,
            rank_tol: DEFAULT_RANK_TOL,
        });
    }
    let scale = CMatrix::from_fn(d, d, |i, j| {
        if i == j {
            c(1.0 / diag[i].sqrt())
        } else {
            c(0.0)
        }
    });
    let t0s = t0.congruence(&scale);
    let t1s = t1.congruence(&scale);
    let r = inv_sqrt_psd(&t0s, DEFAULT_RANK_TOL)?;
    Ok(t1s.congruence(r.matrix()))
}

/// `P_1 delta_alpha + P_2 delta_beta` with `P_1 = (beta T_0 - T_1)/(beta - alpha)`
/// and `P_2 = (T_1 - alpha T_0)/(beta - alpha)`; a scalar pencil gives the
/// single atom `T_0 delta_alpha`.
pub fn two_atomic(t0: &HermitianMatrix, t1: &HermitianMatrix) -> Result<AtomicOVM> {
    let b = pencil_bounds(t0, t1)?;
    two_atomic_from_bounds(t0, t1, &b)
}

fn two_atomic_from_bounds(
    t0: &HermitianMatrix,
    t1: &HermitianMatrix,
    b: &PencilBounds,
) -> Result<AtomicOVM> {
    if b.is_degenerate() {
        return AtomicOVM::new(t0.dim(), vec![b.alpha], vec![t0.clone()]);
    }
    let w = b.beta - b.alpha;
    let p1 = HermitianMatrix::lincomb(b.beta / w, t0, -1.0 / w, t1);
    let p2 = HermitianMatrix::lincomb(1.0 / w, t1, -b.alpha / w, t0);
    AtomicOVM::new(t0.dim(), vec![b.alpha, b.beta], vec![p1, p2])
}

/// Pencil bounds, the 2-atomic measure and its verification.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSolution {
    pub bounds: PencilBounds,
    pub measure: AtomicOVM,
    /// Relative Frobenius residuals of the zeroth and first moments.
    pub moment_residuals: [f64; 2],
    pub verdict: Verdict,
}

pub const PAIR_MOMENT_TOL: f64 = 1e-10;

pub fn solve_pair(t0: &HermitianMatrix, t1: &HermitianMatrix) -> Result<PairSolution> {
    let bounds = pencil_bounds(t0, t1)?;
    let measure = two_atomic_from_bounds(t0, t1, &bounds)?;
    let r0 = rel_diff(measure.moment(0).matrix(), t0.matrix(), f64::MIN_POSITIVE);
    let r1 = rel_diff(measure.moment(1).matrix(), t1.matrix(), f64::MIN_POSITIVE);
    let worst = r0.max(r1);
    let moments = Verdict::new("moment_match", worst <= PAIR_MOMENT_TOL)
        .with_margin(worst)
        .with_tolerance(PAIR_MOMENT_TOL);
    let verdict = Verdict::all_of("two_atomic", vec![is_measure(&measure)?, moments])
        .metric("alpha", bounds.alpha)
        .metric("beta", bounds.beta);
    Ok(PairSolution {
        bounds,
        measure,
        moment_residuals: [r0, r1],
        verdict,
    })
}

pub const SMULJAN_EPS: f64 = 1e-8;
/// Relative cutoff on the eigenvalues of `X` below which `X^{1/2}` is
/// treated as singular.
pub const SMULJAN_PINV_CUTOFF: f64 = 1e-10;
/// Relative residual above which `Y` is declared outside the range of `X^{1/2}`.
pub const SMULJAN_RANGE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct SmuljanReport {
    /// Children: `block_psd` and `factorization`.
    pub verdict: Verdict,
    pub block_psd: bool,
    pub range_condition: bool,
    pub factor_psd: bool,
    pub consistent: bool,
    /// `W` with `X^{1/2} W = Y`, present when the block is PSD.
    pub factor: Option<CMatrix>,
}

/// Decides positivity of `[[X, Y], [Y*, Z]]` by assembling the block and by
/// solving `X^{1/2} W = Y` with `Z >= W* W`.
pub fn smuljan_factor(x: &HermitianMatrix, y: &CMatrix, z: &HermitianMatrix) -> Result<SmuljanReport> {
    smuljan_factor_with(x, y, z, SMULJAN_EPS)
}

pub fn smuljan_factor_with(
    x: &HermitianMatrix,
    y: &CMatrix,
    z: &HermitianMatrix,
    eps: f64,
) -> Result<SmuljanReport> {
    let (p, q) = (x.dim(), z.dim());
    if y.nrows() != p || y.ncols() != q {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: y.nrows(),
        });
    }
    let mut block = CMatrix::zeros(p + q, p + q);
    block.view_mut((0, 0), (p, p)).copy_from(x.matrix());
    block.view_mut((0, p), (p, q)).copy_from(y);
    block.view_mut((p, 0), (q, p)).copy_from(&y.adjoint());
    block.view_mut((p, p), (q, q)).copy_from(z.matrix());
    let a = psd_check(&HermitianMatrix::new(block)?, eps)?;

    let ex = eig(x)?;
    let floor = DEFAULT_PSD_EPS * ex.max_abs().max(1.0);
    if ex.min() < -floor {
        return Err(Error::NotPsd {
            min_eigenvalue: ex.min(),
            tolerance: floor,
        });
    }
    // Eigenvalues of X at roundoff level would give X^{1/2} singular values
    // near sqrt(machine eps), so the cutoff is applied to X itself.
    let cutoff = SMULJAN_PINV_CUTOFF * ex.max().max(0.0);
    let half = ex.apply(|v| v.max(0.0).sqrt());
    let pinv = ex.apply(|v| if v > cutoff && v > 0.0 { 1.0 / v.sqrt() } else { 0.0 });
    let w = pinv.matrix() * y;
    let range_residual = (half.matrix() * &w - y).norm();
    let y_norm = y.norm();
    let range_condition = range_residual <= SMULJAN_RANGE_TOL * y_norm;
    let ww = HermitianMatrix::new(w.adjoint() * &w)?;
    let schur = z.sub(&ww);
    let scale = z.frobenius_norm().max(ww.frobenius_norm()).max(1.0);
    let s = psd_check_scaled(&schur, eps, scale)?;
    let factor_psd = range_condition && s.is_psd;

    let block_psd = a.is_psd;
    let consistent = block_psd == factor_psd;
    let block_v = Verdict::new("block_psd", block_psd)
        .with_margin(a.min_eigenvalue)
        .with_tolerance(a.tolerance_used);
    let mut fact_v = Verdict::new("factorization", factor_psd)
        .metric("range_residual", range_residual)
        .metric("schur_min_eigenvalue", s.min_eigenvalue)
        .with_margin(s.min_eigenvalue)
        .with_tolerance(s.tolerance_used);
    if !range_condition {
        fact_v = fact_v.note("Y is not in the range of X^{1/2}");
    }
    let mut verdict = Verdict::all_of("smuljan", vec![block_v, fact_v])
        .metric("consistent", if consistent { 1.0 } else { 0.0 });
    if !consistent {
        verdict = verdict.note("block test and factorization test disagree");
    }
    Ok(SmuljanReport {
        verdict,
        block_psd,
        range_condition,
        factor_psd,
        consistent,
        factor: factor_psd.then_some(w),
    })
}

/// `T_0 = diag(e^{-n})`, `T_1 = diag(-n e^{-n})`, `n = 1..d`.
pub fn kimsey_pair(d: usize) -> (HermitianMatrix, HermitianMatrix) {
    let t0: Vec<f64> = (1..=d).map(|n| (-(n as f64)).exp()).collect();
    let t1: Vec<f64> = (1..=d).map(|n| -(n as f64) * (-(n as f64)).exp()).collect();
    (HermitianMatrix::diagonal(&t0), HermitianMatrix::diagonal(&t1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct KimseySection {
    pub dim: usize,
    pub bounds: PencilBounds,
    pub measure: AtomicOVM,
    pub verdict: Verdict,
}

/// The `d`-dimensional section: its pencil has `alpha = -d`, so the support
/// of any representing measure must reach `-d`.
pub fn kimsey_section(d: usize) -> Result<KimseySection> {
    if d == 0 {
        return Err(Error::InvalidArgument("section dimension must be at least 1".into()));
    }
    let (t0, t1) = kimsey_pair(d);
    let sol = solve_pair(&t0, &t1)?;
    let df = d as f64;
    let alpha_dev = (sol.bounds.alpha + df).abs() / df;
    let beta_dev = (sol.bounds.beta + 1.0).abs();
    let bounds_ok = alpha_dev <= 1e-12 && beta_dev <= 1e-12;
    let verdict = Verdict::all_of(
        "kimsey_section",
        vec![
            Verdict::new("alpha_equals_minus_d", bounds_ok).with_margin(alpha_dev.max(beta_dev)),
            sol.verdict,
        ],
    )
    .metric("dim", df)
    .metric("alpha", sol.bounds.alpha)
    .metric("beta", sol.bounds.beta);
    Ok(KimseySection {
        dim: d,
        bounds: sol.bounds,
        measure: sol.measure,
        verdict,
    })
}
