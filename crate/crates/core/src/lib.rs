//! Finite-dimensional operator moment problems.
//!
//! Operator moment sequences `T_n = int t^n dE(t)` with Hermitian matrix
//! terms: block and localized Hankel positivity, finitely atomic
//! operator-valued measures, recovery of representing measures from linear
//! recursive sequences, the two-moment pencil problem, and operator weighted
//! shifts.

pub mod error;
pub mod gallery;
pub mod io;
pub mod linalg;
pub mod moment;
pub mod ovm;
pub mod pair;
pub mod random;
pub mod recursive;
pub mod shift;
pub mod verdict;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, HermitianMatrix, PsdReport, C64};
pub use moment::{OperatorSequence, SampleScheme};
pub use ovm::AtomicOVM;
pub use pair::PencilBounds;
pub use recursive::{RealPolynomial, RecurrenceFit, RecursiveSolution};
pub use shift::{ShiftMoments, WeightFamily};
pub use verdict::{Verdict, Witness};
