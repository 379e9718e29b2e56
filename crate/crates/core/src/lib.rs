//! Invariant risk minimization over linear representations.
//!
//! Everything is expressed over second-moment statistics of each training
//! environment, so risks, per-environment least-squares classifiers and both
//! invariance penalties are exact quadratic forms rather than sample averages.
//!
//! - [`linmath`]: symmetric eigendecomposition, PSD solves, condition numbers.
//! - [`invariance`]: risks, Gram matrices, classifiers, IRMv1/IRMv2 penalties.
//! - [`envgen`]: synthetic environments (SEM, unit-test problems, counterexamples).
//! - [`trainers`]: IRMv2, IRMv1, IRMv1A and baseline trainers.
//! - [`diagnostics`]: closed forms, non-degeneracy checks, conditioning analyses.

pub mod diagnostics;
pub mod envgen;
pub mod error;
pub mod invariance;
pub mod linmath;
pub mod rng;
pub mod trainers;

pub use error::{Error, Result};
pub use nalgebra::{DMatrix, DVector};
