//! Spectral analysis of bounded functions on the real line and bounded
//! mild solutions of 1-periodic evolution equations.
//!
//! The library is organized around five stages:
//!
//! - [`funcspace`] — carriers for bounded functions: exact trigonometric
//!   polynomials, uniformly sampled grid functions, the translation
//!   operator `S(tau)`, and finite sets of unit-circle angles.
//! - [`spectrum`] — the transform `R(lambda, S) g`, detection of the
//!   circular spectrum `sigma(g)` from radial blow-up exponents, the
//!   Carleman transform and spectrum, and the comparison of the two
//!   spectra for smooth inputs.
//! - [`process`] — 1-periodic evolutionary processes `U(t, s)` from
//!   finite-dimensional periodic systems, monodromy operators
//!   `P(t) = U(t, t-1)`, their eigenvalues, and the spectral gap
//!   against a set of forcing angles.
//! - [`solver`] — the bounded-mild-solution machinery: the integral
//!   operator `G`, the affine semigroup `T^h_f`, a per-mode direct
//!   solver for quasi-periodic forcing, and residual certification of
//!   the mild-solution identity.
//! - [`perturb`] — small nonlinear perturbations via a cut-off
//!   superposition operator and Picard iteration, with an admissible
//!   threshold for the perturbation size derived from the linear
//!   solution operator's gain.
//!
//! Heavy probe loops run in parallel when the `parallel` feature
//! (default) is enabled; disabling it yields a dependency-free
//! sequential build with identical results.

pub mod error;
pub mod funcspace;
pub mod io;
pub mod ode;
pub mod perturb;
pub mod process;
pub mod quad;
pub mod solver;
pub mod spectrum;

mod par;

pub use error::{Error, Result};
pub use par::configure_threads;
pub use funcspace::{
    circular_distance, make_levitan, sup_norm, wrap_angle, FuncRef, GridFunction, Mode, Signal,
    TrigPolynomial, UnitCircleSet, FREQ_TOL,
};

/// Tool version string embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
