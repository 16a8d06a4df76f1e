//! Operator weighted shifts with positive invertible weights `A_n`:
//! products `B_n = A_{n-1} B_{n-1}`, Gram moments `B_n* B_n`, sampled
//! subnormality tests and flatness propagation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{
    eig, psd_check_real, CMatrix, CVector, HermitianMatrix, DEFAULT_PSD_EPS, DEFAULT_RANK_TOL,
};
use crate::moment::{hausdorff_check, worst_over_samples, OperatorSequence, SampleScheme};
use crate::ovm::{is_semispectral, moments, sequence_residual, AtomicOVM};
use crate::pair::smuljan_factor;
use crate::verdict::Verdict;

/// Products with Frobenius norm above this are rejected.
pub const SHIFT_OVERFLOW_LIMIT: f64 = 1e150;
pub const DEFAULT_FLAT_TOL: f64 = 1e-10;
pub const REPORT_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightFamily {
    dim: usize,
    weights: Vec<HermitianMatrix>,
    norm_bound: f64,
}

impl WeightFamily {
    /// Every weight must be positive definite. The norm bound defaults to the
    /// largest weight norm in the window.
    pub fn new(weights: Vec<HermitianMatrix>) -> Result<Self> {
        let first = weights.first().ok_or(Error::Empty("weight family"))?;
        let dim = first.dim();
        let mut sup = 0.0f64;
        for w in &weights {
            if w.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: w.dim(),
                });
            }
            let e = eig(w)?;
            let tol = DEFAULT_PSD_EPS * e.max_abs().max(1.0);
            if e.min() < -tol {
                return Err(Error::NotPsd {
                    min_eigenvalue: e.min(),
                    tolerance: tol,
                });
            }
            if e.max() <= 0.0 || e.min() <= DEFAULT_RANK_TOL * e.max() {
                return Err(Error::SingularOperator {
                    min_eigenvalue: e.min(),
                    max_eigenvalue: e.max(),
                    rank_tol: DEFAULT_RANK_TOL,
                });
            }
            sup = sup.max(e.max());
        }
        Ok(Self {
            dim,
            weights,
            norm_bound: sup,
        })
    }

    /// Supplies a known bound on `sup |A_k|` over the whole (infinite) family,
    /// which may exceed what the window shows.
    pub fn with_norm_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound >= self.norm_bound * (1.0 - 1e-12)) {
            return Err(Error::InvalidArgument(format!(
                "norm bound {bound} is below the window supremum {}",
                self.norm_bound
            )));
        }
        self.norm_bound = bound.max(self.norm_bound);
        Ok(self)
    }

    /// `A_k = a` for `k < count`.
    pub fn flat(a: &HermitianMatrix, count: usize) -> Result<Self> {
        Self::new(vec![a.clone(); count])
    }

    /// Scalar shift with weights `alpha_k > 0`.
    pub fn scalar(alphas: &[f64]) -> Result<Self> {
        Self::new(alphas.iter().map(|&a| HermitianMatrix::diagonal(&[a])).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[HermitianMatrix] {
        &self.weights
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShiftMoments {
    /// `A_0, ..., A_{m-1}`.
    pub weights: Vec<HermitianMatrix>,
    /// `B_0 = I, ..., B_m`.
    pub products: Vec<CMatrix>,
    /// `B_0* B_0, ..., B_m* B_m`.
    pub gram: Vec<HermitianMatrix>,
    pub norm_bound: f64,
}

impl ShiftMoments {
    pub fn dim(&self) -> usize {
        self.gram[0].dim()
    }

    pub fn gram_sequence(&self) -> Result<OperatorSequence> {
        OperatorSequence::new(self.gram.clone())
    }

    pub fn last_index(&self) -> usize {
        self.gram.len() - 1
    }
}

pub fn shift_moments(w: &WeightFamily) -> Result<ShiftMoments> {
    let d = w.dim;
    let mut products = vec![CMatrix::identity(d, d)];
    let mut gram = vec![HermitianMatrix::identity(d)];
    for (n, a) in w.weights.iter().enumerate() {
        let b = a.matrix() * products.last().unwrap();
        let norm = b.norm();
        if !(norm <= SHIFT_OVERFLOW_LIMIT) {
            return Err(Error::OverflowRisk {
                index: n + 1,
                magnitude: norm,
            });
        }
        gram.push(HermitianMatrix::new(b.adjoint() * &b)?);
        products.push(b);
    }
    Ok(ShiftMoments {
        weights: w.weights.clone(),
        products,
        gram,
        norm_bound: w.norm_bound,
    })
}

fn check_unit(x: &CVector) -> Result<()> {
    let norm = x.norm();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::NotUnitVector { norm });
    }
    Ok(())
}

/// `alpha_n(x) = |B_n x| / |B_{n-1} x|` for `n = 1..=m`.
pub fn local_weight_sequence(sm: &ShiftMoments, x: &CVector) -> Result<Vec<f64>> {
    check_unit(x)?;
    if x.len() != sm.dim() {
        return Err(Error::DimensionMismatch {
            expected: sm.dim(),
            found: x.len(),
        });
    }
    let norms: Vec<f64> = sm.products.iter().map(|b| (b * x).norm()).collect();
    Ok(norms.windows(2).map(|w| w[1] / w[0]).collect())
}

/// Scalar Gram moments `prod_{j <= k} alpha_j^2` of a scalar shift, with
/// `s_0 = 1`.
pub fn scalar_gram(alphas: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(alphas.len() + 1);
    let mut acc = 1.0;
    out.push(acc);
    for a in alphas {
        acc *= a * a;
        out.push(acc);
    }
    out
}

fn hankel(n: usize, f: impl Fn(usize) -> f64) -> DMatrix<f64> {
    DMatrix::from_fn(n + 1, n + 1, |i, j| f(i + j))
}

/// Truncated subnormality test at order `n`: for each sampled `x` the
/// localized Gram sequence `s_k = <B_k* B_k x, x>` must have PSD Hankel and
/// Stieltjes matrices and be supported below `norm_bound^2`; the rescaled
/// operator Gram sequence must pass the block test on `[-1, 1]`.
pub fn subnormality_check(w: &WeightFamily, n: usize, scheme: &SampleScheme) -> Result<Verdict> {
    subnormality_check_with(w, n, scheme, DEFAULT_PSD_EPS)
}

pub fn subnormality_check_with(
    w: &WeightFamily,
    n: usize,
    scheme: &SampleScheme,
    eps: f64,
) -> Result<Verdict> {
    if w.len() < 2 * n + 1 {
        return Err(Error::InsufficientMoments {
            needed: 2 * n + 1,
            available: w.len(),
        });
    }
    let sm = shift_moments(w)?;
    let samples = scheme.vectors(w.dim)?;
    let nb2 = w.norm_bound * w.norm_bound;
    let local = |x: &CVector| -> Vec<f64> {
        (0..=2 * n + 1).map(|k| sm.gram[k].quad_form(x)).collect()
    };
    let hank = worst_over_samples("hankel", &samples, |x| {
        let s = local(x);
        psd_check_real(&hankel(n, |k| s[k]), eps)
    })?;
    let stieltjes = worst_over_samples("stieltjes", &samples, |x| {
        let s = local(x);
        psd_check_real(&hankel(n, |k| s[k + 1]), eps)
    })?;
    // support in [0, nb^2]: localize the rescaled sequence at 1 - t
    let upper = worst_over_samples("upper_support", &samples, |x| {
        let s = local(x);
        let u = |k: usize| s[k] / nb2.powi(k as i32);
        psd_check_real(&hankel(n, |k| u(k) - u(k + 1)), eps)
    })?;
    let mut children = vec![hank, stieltjes, upper];
    if n >= 1 {
        let rescaled = OperatorSequence::new(
            sm.gram[..=2 * n]
                .iter()
                .enumerate()
                .map(|(k, g)| g.scale(1.0 / nb2.powi(k as i32)))
                .collect(),
        )?;
        let h = hausdorff_check(&rescaled, n - 1, eps)?;
        let min = h.min_eigenvalue();
        children.push(
            Verdict::new("hausdorff", h.is_psd())
                .with_margin(min)
                .metric("order", (n - 1) as f64),
        );
    }
    Ok(Verdict::all_of("subnormality", children)
        .metric("order", n as f64)
        .metric("norm_bound", w.norm_bound))
}

fn rel_dev(a: &HermitianMatrix, b: &HermitianMatrix) -> f64 {
    (a.matrix() - b.matrix()).norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
}

/// Checks the flatness propagation prediction: if `A_k = A_{k+1}` then every
/// `A_n` with `n >= 1` equals `A_k`. A deviation certifies that the shift is
/// not subnormal. The block Hankel windows of the Gram sequence are also
/// tested through the block factorization.
pub fn propagation_check(w: &WeightFamily, k: usize, tol: f64) -> Result<Verdict> {
    if k + 1 >= w.len() {
        return Err(Error::InsufficientMoments {
            needed: k + 1,
            available: w.len().saturating_sub(1),
        });
    }
    let ak = &w.weights[k];
    let pre = rel_dev(&w.weights[k + 1], ak);
    if pre > tol {
        return Err(Error::NotFlatAtK {
            index: k,
            deviation: pre,
        });
    }
    let start = if k == 0 { 0 } else { 1 };
    let mut max_dev = 0.0f64;
    let mut first_violation: Option<usize> = None;
    for n in start..w.len() {
        let dev = rel_dev(&w.weights[n], ak);
        max_dev = max_dev.max(dev);
        if dev > REPORT_TOL && first_violation.is_none() {
            first_violation = Some(n);
        }
    }
    let mut flat = Verdict::new("weights_flat", first_violation.is_none())
        .with_margin(max_dev)
        .with_tolerance(REPORT_TOL)
        .metric("max_deviation", max_dev);
    if let Some(n) = first_violation {
        flat = flat
            .metric("first_violation", n as f64)
            .note(format!("A_{n} differs from A_{k}: the shift is not subnormal"));
    }

    let sm = shift_moments(w)?;
    let g = &sm.gram;
    let d = w.dim;
    let mut windows = Vec::new();
    let mut first_bad: Option<usize> = None;
    let mut inconsistent = 0usize;
    for j in 0..g.len().saturating_sub(4) {
        let mut y = CMatrix::zeros(d, 2 * d);
        y.view_mut((0, 0), (d, d)).copy_from(g[j + 1].matrix());
        y.view_mut((0, d), (d, d)).copy_from(g[j + 2].matrix());
        let mut z = CMatrix::zeros(2 * d, 2 * d);
        z.view_mut((0, 0), (d, d)).copy_from(g[j + 2].matrix());
        z.view_mut((0, d), (d, d)).copy_from(g[j + 3].matrix());
        z.view_mut((d, 0), (d, d)).copy_from(g[j + 3].matrix());
        z.view_mut((d, d), (d, d)).copy_from(g[j + 4].matrix());
        let r = smuljan_factor(&g[j], &y, &HermitianMatrix::new(z)?)?;
        if !r.consistent {
            inconsistent += 1;
        }
        if !r.verdict.passed && first_bad.is_none() {
            first_bad = Some(j);
        }
        windows.push(r.verdict.with_name(format!("window[{j}]")));
    }
    let mut smuljan = Verdict::new("gram_windows", first_bad.is_none())
        .metric("windows", windows.len() as f64)
        .metric("inconsistent", inconsistent as f64);
    if let Some(j) = first_bad {
        smuljan = smuljan
            .metric("first_failing_window", j as f64)
            .note(format!("block Hankel of B_n* B_n at offset {j} is not positive"));
    }
    smuljan.children = windows;
    Ok(Verdict::all_of("propagation", vec![flat, smuljan])
        .metric("flat_index", k as f64)
        .metric("precondition_deviation", pre))
}

/// Residuals of `B_{n+p}* B_{n+p} = B_p* A_p^{2n} B_p` for `n = 1..=n_max`.
pub fn flatness_identity_check(sm: &ShiftMoments, p: usize, n_max: usize) -> Result<Verdict> {
    if p + 1 >= sm.weights.len() || p + n_max > sm.last_index() {
        return Err(Error::InsufficientMoments {
            needed: (p + n_max).max(p + 2),
            available: sm.last_index(),
        });
    }
    let ap = &sm.weights[p];
    let pre = rel_dev(&sm.weights[p + 1], ap);
    if pre > DEFAULT_FLAT_TOL {
        return Err(Error::NotFlatAtP {
            index: p,
            deviation: pre,
        });
    }
    let a2 = ap.mul(ap);
    let bp = &sm.products[p];
    let mut power = CMatrix::identity(sm.dim(), sm.dim());
    let mut v = Verdict::new("flatness_identity", true);
    let mut worst = 0.0f64;
    let mut first_bad: Option<usize> = None;
    for n in 1..=n_max {
        power = &a2 * power;
        let predicted = bp.adjoint() * &power * bp;
        let actual = &sm.gram[n + p];
        let res = (actual.matrix() - predicted).norm() / actual.frobenius_norm();
        v = v.metric(format!("residual[{n}]"), res);
        worst = worst.max(res);
        if res > REPORT_TOL && first_bad.is_none() {
            first_bad = Some(n);
        }
    }
    v.passed = first_bad.is_none();
    if let Some(n) = first_bad {
        v = v.metric("first_violation", (n + p) as f64);
    }
    Ok(v.with_margin(worst).with_tolerance(REPORT_TOL))
}

pub const REPRESENTING_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct LocalizedShiftMeasure {
    pub measure: AtomicOVM,
    /// `is_semispectral` of the localized measure.
    pub verdict: Verdict,
}

/// `dE_p(t) = t^p (B_p*)^{-1} dE(t) B_p^{-1}` for a measure `E` representing
/// the Gram sequence.
pub fn localized_shift_measure(
    e: &AtomicOVM,
    sm: &ShiftMoments,
    p: usize,
) -> Result<LocalizedShiftMeasure> {
    if p > sm.last_index() {
        return Err(Error::InsufficientMoments {
            needed: p,
            available: sm.last_index(),
        });
    }
    let gram = sm.gram_sequence()?;
    let residual = sequence_residual(&moments(e, gram.last_index())?, &gram);
    if !(residual <= REPRESENTING_TOL) {
        return Err(Error::NotRepresenting { residual });
    }
    let ge = eig(&sm.gram[p])?;
    if ge.min() <= DEFAULT_RANK_TOL * ge.max() {
        return Err(Error::SingularProduct { index: p });
    }
    let inv = sm.products[p]
        .clone()
        .try_inverse()
        .ok_or(Error::SingularProduct { index: p })?;
    let weights = e
        .atoms()
        .iter()
        .zip(e.weights())
        .map(|(a, s)| s.congruence(&inv).scale(a.powi(p as i32)))
        .collect();
    let measure = AtomicOVM::new(e.dim(), e.atoms().to_vec(), weights)?;
    let verdict = is_semispectral(&measure)?.metric("representing_residual", residual);
    Ok(LocalizedShiftMeasure { measure, verdict })
}
