//! Numerical kernels shared by the boundary solvers and the verification
//! suites: adaptive Gauss–Kronrod quadrature (finite, semi-infinite and
//! endpoint-singular intervals, log-scaled running integrals), bracketed monotone root finding, terminating
//! Gauss hypergeometric series and the unique positive root of a polynomial
//! with a single coefficient sign change.

mod cumulative;
mod hypergeom;
mod poly;
mod quad;
mod roots;

pub use cumulative::{log_cumulative, LogIntegral};
pub use hypergeom::{hypergeom_2f1_terminating, pochhammer};
pub use poly::SignedPolynomial;
pub use quad::{
    quad, quad_from_lower, quad_to_infinity, quad_with, Decay, QuadConfig, QuadResult,
};
pub use roots::{bisect_monotone, BRACKET_DOUBLINGS};

use thiserror::Error;

/// Default absolute quadrature tolerance.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;
/// Default relative tolerance for root finding.
pub const DEFAULT_ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("quadrature did not converge: estimate {} with error {} after {} evaluations", .partial.value, .partial.abs_error, .partial.evaluations)]
    QuadNonConvergence { partial: QuadResult },
    #[error("integrand does not decay on the semi-infinite interval (stopped at {at})")]
    NoDecay { at: f64 },
    #[error("non-finite function value at {at}")]
    NonFinite { at: f64 },
    #[error("no sign change found in the bracket [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
