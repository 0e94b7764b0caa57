//! Feedback particle filtering with a Hermite-Galerkin gain solver.
//!
//! The gain function of the scalar feedback particle filter solves
//! `(p K)' = −(h − ĥ) p`. This crate approximates `p` with a Gaussian kernel
//! density estimate, expands the flux `f = p K` in generalized Hermite
//! functions, and recovers the coefficients with an explicit backward
//! recursion on the resulting tridiagonal system. Constant-gain and
//! diffusion-map baselines, an exact quadrature gain, an Euler-Maruyama
//! simulator and the experiment harness live alongside.

// `!(a < b)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod error;
pub mod experiments;
pub mod gain;
pub mod hermite;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod filter;

pub use error::{Error, Result};
