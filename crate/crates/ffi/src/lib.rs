//! C ABI over `opmoment`.
//!
//! Every entry point returns an [`OpmStatus`]. On failure a message is kept in
//! thread-local storage and can be read with [`opm_last_error_message`].
//! Matrices cross the boundary row-major as separate real and imaginary
//! arrays; a null imaginary pointer means a real matrix.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use opmoment::linalg::{CMatrix, DEFAULT_PSD_EPS};
use opmoment::moment::{self, OperatorSequence, SampleScheme};
use opmoment::{ovm, pair, recursive, AtomicOVM, Error, HermitianMatrix, C64};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotHermitian = 4,
    InsufficientMoments = 5,
    NotPsd = 6,
    NotMeasure = 7,
    NoRecurrence = 8,
    NonRealRoots = 9,
    Singular = 10,
    Numerical = 11,
    Panic = 99,
}

/// Opaque operator moment sequence.
pub struct OpmSequence(OperatorSequence);

/// Opaque finitely atomic operator-valued measure.
pub struct OpmMeasure(AtomicOVM);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> OpmStatus {
    use Error::*;
    match e {
        NotSquare { .. } | DimensionMismatch { .. } => OpmStatus::DimensionMismatch,
        NotHermitian { .. } => OpmStatus::NotHermitian,
        InsufficientMoments { .. } => OpmStatus::InsufficientMoments,
        NotPsd { .. } => OpmStatus::NotPsd,
        NotMeasure { .. } | NotSemiSpectral { .. } => OpmStatus::NotMeasure,
        NoRecurrenceFound { .. } => OpmStatus::NoRecurrence,
        NonRealRoots { .. } | NonSimpleRoots { .. } => OpmStatus::NonRealRoots,
        SingularOperator { .. } | SingularProduct { .. } | DegenerateBlock => OpmStatus::Singular,
        InvalidArgument(_) | Empty(_) | NotUnitVector { .. } | OverflowRisk { .. } => OpmStatus::InvalidArgument,
        _ => OpmStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (OpmStatus, String)>) -> OpmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            OpmStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            OpmStatus::Panic
        }
    }
}

fn model<T>(r: opmoment::Result<T>) -> Result<T, (OpmStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (OpmStatus, String) {
    (OpmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_matrices(
    dim: usize,
    count: usize,
    re: *const f64,
    im: *const f64,
) -> Result<Vec<HermitianMatrix>, (OpmStatus, String)> {
    if dim == 0 {
        return Err((OpmStatus::InvalidArgument, "dim must be positive".into()));
    }
    if re.is_null() {
        return Err(null("re"));
    }
    let n = dim * dim * count;
    let re = slice::from_raw_parts(re, n);
    let im = (!im.is_null()).then(|| slice::from_raw_parts(im, n));
    (0..count)
        .map(|k| {
            let off = k * dim * dim;
            let m = CMatrix::from_fn(dim, dim, |i, j| {
                let at = off + i * dim + j;
                C64::new(re[at], im.map_or(0.0, |v| v[at]))
            });
            model(HermitianMatrix::new(m))
        })
        .collect()
}

unsafe fn write_out<T>(out: *mut T, value: T) {
    if !out.is_null() {
        *out = value;
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn opm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread, or null.
/// The pointer stays valid until the next call into the library.
#[no_mangle]
pub extern "C" fn opm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds a sequence from `count` row-major `dim x dim` Hermitian matrices.
///
/// # Safety
/// `re` (and `im` when non-null) must point to `count * dim * dim` doubles.
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn opm_sequence_new(
    dim: usize,
    count: usize,
    re: *const f64,
    im: *const f64,
    out: *mut *mut OpmSequence,
) -> OpmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let terms = read_matrices(dim, count, re, im)?;
        let seq = model(OperatorSequence::new(terms))?;
        *out = Box::into_raw(Box::new(OpmSequence(seq)));
        Ok(())
    })
}

/// # Safety
/// `seq` must come from `opm_sequence_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn opm_sequence_free(seq: *mut OpmSequence) {
    if !seq.is_null() {
        drop(Box::from_raw(seq));
    }
}

/// # Safety
/// `seq` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn opm_sequence_dim(seq: *const OpmSequence) -> usize {
    seq.as_ref().map_or(0, |s| s.0.dim())
}

/// # Safety
/// `seq` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn opm_sequence_len(seq: *const OpmSequence) -> usize {
    seq.as_ref().map_or(0, |s| s.0.len())
}

/// Block Hankel test of order `order`. A non-positive `eps` selects the default.
///
/// # Safety
/// `seq` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn opm_hamburger_check(
    seq: *const OpmSequence,
    order: usize,
    eps: f64,
    passed: *mut bool,
    min_eigenvalue: *mut f64,
) -> OpmStatus {
    guard(|| {
        let s = seq.as_ref().ok_or_else(|| null("seq"))?;
        let eps = if eps > 0.0 { eps } else { DEFAULT_PSD_EPS };
        let r = model(moment::hamburger_check(&s.0, order, eps))?;
        write_out(passed, r.is_psd);
        write_out(min_eigenvalue, r.min_eigenvalue);
        Ok(())
    })
}

/// Sampled localized Hankel test: canonical polarized vectors plus
/// `extra_random` seeded Gaussian samples.
///
/// # Safety
/// `seq` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn opm_local_check(
    seq: *const OpmSequence,
    order: usize,
    extra_random: usize,
    seed: u64,
    eps: f64,
    passed: *mut bool,
    margin: *mut f64,
) -> OpmStatus {
    guard(|| {
        let s = seq.as_ref().ok_or_else(|| null("seq"))?;
        let eps = if eps > 0.0 { eps } else { DEFAULT_PSD_EPS };
        let scheme = SampleScheme::CanonicalPolarized { extra_random, seed };
        let v = model(moment::local_moment_check(&s.0, &scheme, order, eps))?;
        write_out(passed, v.passed);
        write_out(margin, v.margin.unwrap_or(f64::NAN));
        Ok(())
    })
}

/// Recovers the representing charge of a recursive sequence. `r_max == 0`
/// selects half the sequence length. `is_moment` reports whether the charge
/// is a positive measure.
///
/// # Safety
/// `seq` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn opm_solve_recursive(
    seq: *const OpmSequence,
    r_max: usize,
    out: *mut *mut OpmMeasure,
    is_moment: *mut bool,
) -> OpmStatus {
    guard(|| {
        let s = seq.as_ref().ok_or_else(|| null("seq"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r_max = if r_max == 0 { recursive::default_r_max(&s.0) } else { r_max };
        let sol = model(recursive::solve_recursive(&s.0, r_max, &SampleScheme::canonical()))?;
        write_out(is_moment, sol.is_moment_sequence.passed);
        *out = Box::into_raw(Box::new(OpmMeasure(sol.charge)));
        Ok(())
    })
}

/// Pencil bounds `alpha, beta` of the pair `(T_0, T_1)` held in a two-term sequence.
///
/// # Safety
/// `seq` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn opm_pencil_bounds(
    seq: *const OpmSequence,
    alpha: *mut f64,
    beta: *mut f64,
) -> OpmStatus {
    guard(|| {
        let s = two_terms(seq)?;
        let b = model(pair::pencil_bounds(s.term(0), s.term(1)))?;
        write_out(alpha, b.alpha);
        write_out(beta, b.beta);
        Ok(())
    })
}

/// Two-atomic positive measure with moments `(T_0, T_1)`.
///
/// # Safety
/// `seq` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn opm_two_atomic(seq: *const OpmSequence, out: *mut *mut OpmMeasure) -> OpmStatus {
    guard(|| {
        let s = two_terms(seq)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let e = model(pair::two_atomic(s.term(0), s.term(1)))?;
        *out = Box::into_raw(Box::new(OpmMeasure(e)));
        Ok(())
    })
}

unsafe fn two_terms<'a>(seq: *const OpmSequence) -> Result<&'a OperatorSequence, (OpmStatus, String)> {
    let s = &seq.as_ref().ok_or_else(|| null("seq"))?.0;
    if s.len() != 2 {
        return Err((
            OpmStatus::InvalidArgument,
            format!("expected exactly two terms, found {}", s.len()),
        ));
    }
    Ok(s)
}

/// Builds a measure from `count` atoms and row-major weights.
///
/// # Safety
/// `atoms` must hold `count` doubles; `re` (and `im` when non-null)
/// `count * dim * dim` doubles. `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn opm_measure_new(
    dim: usize,
    count: usize,
    atoms: *const f64,
    re: *const f64,
    im: *const f64,
    out: *mut *mut OpmMeasure,
) -> OpmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if atoms.is_null() && count > 0 {
            return Err(null("atoms"));
        }
        let weights = read_matrices(dim, count, re, im)?;
        let atoms = if count == 0 { Vec::new() } else { slice::from_raw_parts(atoms, count).to_vec() };
        let e = model(AtomicOVM::new(dim, atoms, weights))?;
        *out = Box::into_raw(Box::new(OpmMeasure(e)));
        Ok(())
    })
}

/// # Safety
/// `m` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn opm_measure_free(m: *mut OpmMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn opm_measure_dim(m: *const OpmMeasure) -> usize {
    m.as_ref().map_or(0, |m| m.0.dim())
}

/// Number of atoms after merging.
///
/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn opm_measure_len(m: *const OpmMeasure) -> usize {
    m.as_ref().map_or(0, |m| m.0.len())
}

/// Copies the sorted atoms into `out`, which must hold `opm_measure_len` doubles.
///
/// # Safety
/// `m` must be a live handle and `out` large enough.
#[no_mangle]
pub unsafe extern "C" fn opm_measure_atoms(m: *const OpmMeasure, out: *mut f64) -> OpmStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("measure"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        slice::from_raw_parts_mut(out, m.0.len()).copy_from_slice(m.0.atoms());
        Ok(())
    })
}

/// Copies weight `k` row-major into `re` and `im` (`dim * dim` doubles each;
/// `im` may be null).
///
/// # Safety
/// `m` must be a live handle and the buffers large enough.
#[no_mangle]
pub unsafe extern "C" fn opm_measure_weight(
    m: *const OpmMeasure,
    k: usize,
    re: *mut f64,
    im: *mut f64,
) -> OpmStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("measure"))?;
        let w = m.0.weights().get(k).ok_or_else(|| {
            (OpmStatus::InvalidArgument, format!("weight index {k} out of range"))
        })?;
        if re.is_null() {
            return Err(null("re"));
        }
        let d = w.dim();
        let re = slice::from_raw_parts_mut(re, d * d);
        let mut im = (!im.is_null()).then(|| slice::from_raw_parts_mut(im, d * d));
        for i in 0..d {
            for j in 0..d {
                let z = w.get(i, j);
                re[i * d + j] = z.re;
                if let Some(im) = im.as_deref_mut() {
                    im[i * d + j] = z.im;
                }
            }
        }
        Ok(())
    })
}

/// Whether every weight is PSD; `min_eigenvalue` receives the worst one.
///
/// # Safety
/// `m` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn opm_measure_is_positive(
    m: *const OpmMeasure,
    passed: *mut bool,
    min_eigenvalue: *mut f64,
) -> OpmStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("measure"))?;
        let v = model(ovm::is_measure(&m.0))?;
        write_out(passed, v.passed);
        write_out(min_eigenvalue, v.margin.unwrap_or(f64::NAN));
        Ok(())
    })
}

/// Moment sequence `T_0 .. T_last` of a measure (`last + 1` terms).
///
/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn opm_measure_moments(
    m: *const OpmMeasure,
    last: usize,
    out: *mut *mut OpmSequence,
) -> OpmStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("measure"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let seq = model(ovm::moments(&m.0, last))?;
        *out = Box::into_raw(Box::new(OpmSequence(seq)));
        Ok(())
    })
}

/// Static NUL-terminated description of a status code.
#[no_mangle]
pub extern "C" fn opm_status_name(status: OpmStatus) -> *const c_char {
    let s: &'static CStr = match status {
        OpmStatus::Ok => c"ok",
        OpmStatus::NullPointer => c"null pointer",
        OpmStatus::InvalidArgument => c"invalid argument",
        OpmStatus::DimensionMismatch => c"dimension mismatch",
        OpmStatus::NotHermitian => c"not Hermitian",
        OpmStatus::InsufficientMoments => c"insufficient moments",
        OpmStatus::NotPsd => c"not positive semidefinite",
        OpmStatus::NotMeasure => c"not a positive measure",
        OpmStatus::NoRecurrence => c"no recurrence found",
        OpmStatus::NonRealRoots => c"characteristic roots not real and simple",
        OpmStatus::Singular => c"singular operator",
        OpmStatus::Numerical => c"numerical failure",
        OpmStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}
