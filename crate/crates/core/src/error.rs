use thiserror::Error;

/// Errors raised by the moment-problem toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (asymmetry {asymmetry:.3e} exceeds {tolerance:.3e})")]
    NotHermitian { asymmetry: f64, tolerance: f64 },

    #[error("eigensolver did not converge for a {dim}x{dim} matrix within {iterations} iterations")]
    ConvergenceFailure { dim: usize, iterations: usize },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.6e}, tolerance {tolerance:.3e})")]
    NotPsd { min_eigenvalue: f64, tolerance: f64 },

    #[error("operator is numerically singular (eigenvalues in [{min_eigenvalue:.6e}, {max_eigenvalue:.6e}], rank tolerance {rank_tol:.1e})")]
    SingularOperator {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
        rank_tol: f64,
    },

    #[error("insufficient moments: need index {needed}, sequence ends at index {available}")]
    InsufficientMoments { needed: usize, available: usize },

    #[error("vector is not a unit vector (norm {norm})")]
    NotUnitVector { norm: f64 },

    #[error("quadratic form <T_{index} x, x> has imaginary part {imag:.3e}")]
    NonRealQuadraticForm { index: usize, imag: f64 },

    #[error("overflow risk at index {index}: magnitude {magnitude:.3e}")]
    OverflowRisk { index: usize, magnitude: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("measure is not semi-spectral (|E(R) - I|_F = {deviation:.3e})")]
    NotSemiSpectral { deviation: f64 },

    #[error("weight at atom {atom} is not positive semidefinite (min eigenvalue {min_eigenvalue:.6e})")]
    NotMeasure { atom: f64, min_eigenvalue: f64 },

    #[error("no linear recurrence of order <= {r_max} found (best relative residual {best_residual:.3e})")]
    NoRecurrenceFound { r_max: usize, best_residual: f64 },

    #[error("polynomial has repeated roots near {near}")]
    NonSimpleRoots { near: f64 },

    #[error("polynomial has non-real roots (max imaginary part {max_imag:.3e})")]
    NonRealRoots { max_imag: f64 },

    #[error("reconstructed moments do not match input (relative residual {residual:.3e} > {tolerance:.1e})")]
    ReconstructionMismatch { residual: f64, tolerance: f64 },

    #[error("positivity routes disagree: {0}")]
    CriteriaDisagreement(String),

    #[error("equivalent conditions disagree: {0}")]
    ConditionDisagreement(String),

    #[error("degenerate block operator: (a-c)^2 + b^2 = 0")]
    DegenerateBlock,

    #[error("weights are not flat at index {index} (relative deviation {deviation:.3e})")]
    NotFlatAtK { index: usize, deviation: f64 },

    #[error("weights are not flat at index {index} (relative deviation {deviation:.3e})")]
    NotFlatAtP { index: usize, deviation: f64 },

    #[error("measure does not represent the moment sequence (relative residual {residual:.3e})")]
    NotRepresenting { residual: f64 },

    #[error("product B_{index} is singular")]
    SingularProduct { index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
