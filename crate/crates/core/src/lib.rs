//! Positivity- and mass-preserving integrators for `y' = A(t, y) y` where
//! `A(t, y)` is a graph Laplacian: nonnegative off-diagonal entries,
//! nonpositive diagonal and (optionally) zero column sums.
//!
//! * [`laplacian`]: matrix validation, shift decomposition, spectral bounds.
//! * [`expm`]: structure-preserving matrix exponentials and resolvents.
//! * [`integrators`]: exponential Magnus/splitting methods, modified
//!   Patankar schemes and classical baselines behind one stepping interface.
//! * [`structure`]: constructive factorizations of quadratic and
//!   mass-action systems into Laplacian form.
//! * [`models`]: benchmark problems and a JSON problem loader.

// negated comparisons are how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod expm;
pub mod integrators;
pub mod laplacian;
pub mod models;
pub mod structure;

pub use error::{Error, Result};
pub use expm::ExpMode;
pub use integrators::{integrate, IntegrateOptions, MethodId, OdeProblem, Trajectory};
pub use laplacian::{ConservationVector, GraphLaplacian, Matrix, Vector};
