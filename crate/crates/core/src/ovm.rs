//! Finitely atomic operator-valued measures `E = sum_k S_k delta_{lambda_k}`.

use crate::error::{Error, Result};
use crate::linalg::{
    c, psd_check, rel_diff, sqrt_psd, CMatrix, HermitianMatrix, DEFAULT_PSD_EPS,
};
use crate::moment::{OperatorSequence, OVERFLOW_LIMIT};
use crate::verdict::Verdict;

/// Atoms closer than `ATOM_MERGE_REL * (1 + max |lambda|)` are merged.
pub const ATOM_MERGE_REL: f64 = 1e-8;

pub fn atom_merge_tol(atoms: &[f64]) -> f64 {
    let scale = atoms.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    ATOM_MERGE_REL * (1.0 + scale)
}

/// Atoms strictly increasing; weights Hermitian, possibly indefinite (a
/// charge). [`is_measure`] decides positivity.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicOVM {
    dim: usize,
    atoms: Vec<f64>,
    weights: Vec<HermitianMatrix>,
}

impl AtomicOVM {
    /// Sorts the atoms and merges near-duplicates by summing their weights.
    pub fn new(dim: usize, atoms: Vec<f64>, weights: Vec<HermitianMatrix>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Empty("measure of dimension 0"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| w.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: w.dim(),
            });
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument("non-finite atom".into()));
        }
        let tol = atom_merge_tol(&atoms);
        let mut pairs: Vec<(f64, HermitianMatrix)> = atoms.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, HermitianMatrix, usize)> = Vec::new();
        for (a, w) in pairs {
            match merged.last_mut() {
                Some((prev, acc, count)) if a - *prev <= tol => {
                    // running mean keeps the merged atom inside the cluster
                    *prev = (*prev * *count as f64 + a) / (*count + 1) as f64;
                    *acc = acc.add(&w);
                    *count += 1;
                }
                _ => merged.push((a, w, 1)),
            }
        }
        let (atoms, weights) = merged.into_iter().map(|(a, w, _)| (a, w)).unzip();
        Ok(Self {
            dim,
            atoms,
            weights,
        })
    }

    /// Trusted constructor for atoms that are already sorted and separated.
    pub(crate) fn from_sorted_parts(
        dim: usize,
        atoms: Vec<f64>,
        weights: Vec<HermitianMatrix>,
    ) -> Result<Self> {
        debug_assert!(atoms.windows(2).all(|w| w[0] < w[1]));
        if atoms.len() != weights.len() {
            return Err(Error::InvalidArgument("atom and weight counts differ".into()));
        }
        Ok(Self {
            dim,
            atoms,
            weights,
        })
    }

    /// The zero measure.
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            atoms: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[HermitianMatrix] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `E(R) = sum_k S_k`.
    pub fn total_mass(&self) -> HermitianMatrix {
        self.weights
            .iter()
            .fold(HermitianMatrix::zeros(self.dim), |acc, w| acc.add(w))
    }

    /// `M_p = sum_k lambda_k^p S_k`, with `0^0 = 1`.
    pub fn moment(&self, p: usize) -> HermitianMatrix {
        let mut acc = CMatrix::zeros(self.dim, self.dim);
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            acc += w.matrix() * c(a.powi(p as i32));
        }
        HermitianMatrix::symmetrized(acc)
    }

    /// The scalar measure `sum_k <S_k x, x> delta_{lambda_k}` as (atom, mass) pairs.
    pub fn localized(&self, x: &crate::linalg::CVector) -> Vec<(f64, f64)> {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(&a, w)| (a, w.quad_form(x)))
            .collect()
    }
}

/// `T_n = sum_k lambda_k^n S_k` for `n = 0..=count`, by direct summation.
pub fn moments(e: &AtomicOVM, count: usize) -> Result<OperatorSequence> {
    for (a, w) in e.atoms.iter().zip(&e.weights) {
        let norm = w.frobenius_norm();
        if norm > 0.0 {
            let log_mag = count as f64 * a.abs().ln() + norm.ln();
            if log_mag > OVERFLOW_LIMIT.ln() {
                return Err(Error::OverflowRisk {
                    index: count,
                    magnitude: log_mag.exp(),
                });
            }
        }
    }
    OperatorSequence::new((0..=count).map(|n| e.moment(n)).collect())
}

/// Passes iff every weight is PSD.
pub fn is_measure(e: &AtomicOVM) -> Result<Verdict> {
    is_measure_with(e, DEFAULT_PSD_EPS)
}

pub fn is_measure_with(e: &AtomicOVM, eps: f64) -> Result<Verdict> {
    let mut v = Verdict::new("is_measure", true);
    let mut worst = f64::INFINITY;
    let mut worst_tol = 0.0;
    for (k, (a, w)) in e.atoms.iter().zip(&e.weights).enumerate() {
        let r = psd_check(w, eps)?;
        v = v.metric(format!("atom[{k}].min_eigenvalue"), r.min_eigenvalue);
        if !r.is_psd {
            v.passed = false;
            v = v.note(format!(
                "weight at atom {a} has min eigenvalue {:.6e}",
                r.min_eigenvalue
            ));
        }
        if r.min_eigenvalue < worst {
            worst = r.min_eigenvalue;
            worst_tol = r.tolerance_used;
        }
    }
    if worst.is_finite() {
        v = v.with_margin(worst).with_tolerance(worst_tol);
    }
    Ok(v)
}

/// Tolerance on `|sum S_k - I|_F / sqrt(d)`.
pub const SEMISPECTRAL_TOL: f64 = 1e-10;

/// Positive with total mass `I`.
pub fn is_semispectral(e: &AtomicOVM) -> Result<Verdict> {
    let measure = is_measure(e)?;
    let deviation = mass_deviation(e);
    let tol = SEMISPECTRAL_TOL * (e.dim as f64).sqrt();
    let unit_mass = Verdict::new("unit_mass", deviation <= tol)
        .with_margin(deviation)
        .with_tolerance(tol);
    Ok(Verdict::all_of("is_semispectral", vec![measure, unit_mass]))
}

fn mass_deviation(e: &AtomicOVM) -> f64 {
    (e.total_mass().matrix() - CMatrix::identity(e.dim, e.dim)).norm()
}

/// Tolerance of both spectrality characterizations.
pub const SPECTRAL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralReport {
    pub verdict: Verdict,
    /// `M_1^2 = M_2`.
    pub moment_route: bool,
    /// Weights are mutually annihilating idempotents.
    pub projection_route: bool,
    pub consistent: bool,
}

/// Decides whether a semi-spectral measure is spectral, by the moment
/// identity `M_1^2 = M_2` and by direct projection tests, and reports whether
/// the two agree.
pub fn is_spectral(e: &AtomicOVM) -> Result<SpectralReport> {
    let semi = is_semispectral(e)?;
    if !semi.passed {
        return Err(Error::NotSemiSpectral {
            deviation: mass_deviation(e),
        });
    }
    let m1 = e.moment(1);
    let m2 = e.moment(2);
    let moment_dev = (m1.mul(&m1) - m2.matrix()).norm() / m2.frobenius_norm().max(1.0);
    let moment_route = moment_dev <= SPECTRAL_TOL;

    let mut proj_dev = 0.0f64;
    for (i, si) in e.weights.iter().enumerate() {
        let idem = (si.mul(si) - si.matrix()).norm();
        proj_dev = proj_dev.max(idem);
        for sj in e.weights.iter().skip(i + 1) {
            proj_dev = proj_dev.max(si.mul(sj).norm());
        }
    }
    let projection_route = proj_dev <= SPECTRAL_TOL;

    let consistent = moment_route == projection_route;
    let a = Verdict::new("moment_identity", moment_route)
        .with_margin(moment_dev)
        .with_tolerance(SPECTRAL_TOL);
    let b = Verdict::new("projection_valued", projection_route)
        .with_margin(proj_dev)
        .with_tolerance(SPECTRAL_TOL);
    let mut verdict = Verdict::new("is_spectral", moment_route && projection_route)
        .metric("consistent", if consistent { 1.0 } else { 0.0 });
    verdict.children = vec![a, b];
    if !consistent {
        verdict = verdict.note("moment identity and projection test disagree");
    }
    Ok(SpectralReport {
        verdict,
        moment_route,
        projection_route,
        consistent,
    })
}

/// Dilation of an atomic measure to the spectral measure of
/// `B = diag(lambda_1 I, ..., lambda_r I)` on `C^{rd}`: `E(.) = V* F(.) V`.
#[derive(Clone, Debug)]
pub struct DilationData {
    /// `(r d) x d`, block `k` equal to `S_k^{1/2}`.
    pub embedding: CMatrix,
    pub dilated_atoms: Vec<f64>,
    pub block_dim: usize,
    /// `|V* B^n V - T_n|_F / max(|T_n|_F, 1e-300)` for `n = 0..=2r`.
    pub residuals: Vec<f64>,
}

impl DilationData {
    pub fn dilated_operator(&self) -> CMatrix {
        let d = self.block_dim;
        let size = d * self.dilated_atoms.len();
        CMatrix::from_fn(size, size, |i, j| {
            if i == j {
                c(self.dilated_atoms[i / d])
            } else {
                c(0.0)
            }
        })
    }

    /// `V* B^n V`.
    pub fn compress(&self, n: usize) -> HermitianMatrix {
        let d = self.block_dim;
        let mut scaled = self.embedding.clone();
        for (k, a) in self.dilated_atoms.iter().enumerate() {
            let f = a.powi(n as i32);
            scaled.rows_mut(k * d, d).scale_mut(f);
        }
        HermitianMatrix::symmetrized(self.embedding.adjoint() * scaled)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Relative tolerance on the dilation round trip.
pub const DILATION_TOL: f64 = 1e-9;

pub fn naimark_dilate(e: &AtomicOVM) -> Result<DilationData> {
    let measure = is_measure(e)?;
    if !measure.passed {
        let (atom, min_eigenvalue) = worst_weight(e, &measure);
        return Err(Error::NotMeasure {
            atom,
            min_eigenvalue,
        });
    }
    let d = e.dim;
    let r = e.len();
    let mut embedding = CMatrix::zeros(r * d, d);
    for (k, w) in e.weights.iter().enumerate() {
        embedding
            .view_mut((k * d, 0), (d, d))
            .copy_from(sqrt_psd(w)?.matrix());
    }
    let mut data = DilationData {
        embedding,
        dilated_atoms: e.atoms.clone(),
        block_dim: d,
        residuals: Vec::new(),
    };
    let reference = moments(e, 2 * r)?;
    data.residuals = (0..=2 * r)
        .map(|n| {
            let t = reference.term(n);
            (data.compress(n).matrix() - t.matrix()).norm() / t.frobenius_norm().max(1e-300)
        })
        .collect();
    let worst = data.max_residual();
    if worst > DILATION_TOL {
        return Err(Error::ReconstructionMismatch {
            residual: worst,
            tolerance: DILATION_TOL,
        });
    }
    Ok(data)
}

fn worst_weight(e: &AtomicOVM, v: &Verdict) -> (f64, f64) {
    let mut out = (f64::NAN, f64::INFINITY);
    for (k, a) in e.atoms.iter().enumerate() {
        if let Some(&m) = v.metrics.get(&format!("atom[{k}].min_eigenvalue")) {
            if m < out.1 {
                out = (*a, m);
            }
        }
    }
    out
}

/// Relative cutoff below which a weight counts as zero.
pub const SUPPORT_REL_TOL: f64 = 1e-10;

/// Atoms carrying a non-negligible weight.
pub fn support(e: &AtomicOVM) -> Vec<f64> {
    support_indices(e)
        .into_iter()
        .map(|k| e.atoms[k])
        .collect()
}

fn support_indices(e: &AtomicOVM) -> Vec<usize> {
    let norms: Vec<f64> = e.weights.iter().map(|w| w.frobenius_norm()).collect();
    let scale = norms.iter().copied().fold(0.0, f64::max);
    (0..e.len())
        .filter(|&k| norms[k] > SUPPORT_REL_TOL * scale && norms[k] > 0.0)
        .collect()
}

/// `E` with zero-weight atoms removed.
pub fn restrict_to_support(e: &AtomicOVM) -> AtomicOVM {
    let idx = support_indices(e);
    AtomicOVM {
        dim: e.dim,
        atoms: idx.iter().map(|&k| e.atoms[k]).collect(),
        weights: idx.iter().map(|&k| e.weights[k].clone()).collect(),
    }
}

/// Relative Frobenius misfit between two sequences over all common terms.
pub fn sequence_residual(a: &OperatorSequence, b: &OperatorSequence) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.terms().iter().zip(b.terms()) {
        num += (x.matrix() - y.matrix()).norm_squared();
        den += y.frobenius_norm().powi(2);
    }
    if den == 0.0 {
        return num.sqrt();
    }
    (num / den).sqrt()
}

/// Relative Frobenius distance between two measures on the same atom grid.
pub fn weight_distance(a: &AtomicOVM, b: &AtomicOVM) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    Some(
        a.weights
            .iter()
            .zip(&b.weights)
            .map(|(x, y)| rel_diff(x.matrix(), y.matrix(), 1.0))
            .fold(0.0, f64::max),
    )
}
