//! Spectra of linear delay differential equations with hierarchical large
//! delays `tau_k = sigma_k * eps^-k`.
//!
//! The crate computes the exact spectrum of the characteristic equation
//! inside a window (argument-principle root finding), the asymptotic
//! spectra that approximate it as `eps -> 0` (strong spectrum, truncated
//! spectra of rank-deficient systems, spectral manifolds), a stability
//! verdict, and a validation harness comparing the two.

pub mod classify;
pub mod degeneracy;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod manifolds;
pub mod model;
pub mod optim;
pub mod poly;
pub mod rootfinder;
pub mod scalar2;

pub use error::{Error, Result};
pub use linalg::ComplexMatrix;
pub use model::{DelaySystem, Epsilon};
pub use num_complex::Complex64;
