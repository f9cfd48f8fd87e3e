//! Nonnegative sparse spike-train restoration.
//!
//! A spike train `z = (q, x)` is observed as `y = Hz + ε` through a convolution
//! dictionary `H`. The crate provides a Bernoulli-generalized-hyperbolic prior
//! whose amplitudes are normal mean-variance mixtures, so they can be integrated
//! out; a partially collapsed Gibbs sampler built on reversible-jump moves over
//! `(q, w)`; the Bernoulli-truncated-Gaussian single-site Gibbs sampler as a
//! baseline; and multivariate convergence diagnostics to compare the two.

pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod experiment;
pub mod io;
pub mod model;
pub mod quadrature;
pub mod samplers;
pub mod simulation;
pub mod specfun;

pub use error::{Error, Result};
