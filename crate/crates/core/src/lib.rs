//! Free boundaries of irreversible investment problems driven by
//! one-dimensional regular diffusions.
//!
//! The optimal capacity policy reflects the capacity at a boundary `b(x)`
//! that solves the integral equation
//!
//! ```text
//! ψ_r(x) ∫_x^∞ ( ∫_0^z π_c(y, b(z)) ψ_r(y) m'(y) dy ) s'(z) / ψ_r(z)² dz = 1
//! ```
//!
//! This crate provides the diffusion primitives ([`diffusion`]), profit
//! functions ([`profit`]), the six explicit boundaries ([`closed_form`]), a
//! generic solver with a residual evaluator ([`solver`]) and Monte Carlo
//! checks of the underlying probabilistic identities ([`mc`]).

pub mod boundary;
pub mod closed_form;
pub mod diffusion;
pub mod error;
pub mod exec;
pub mod mc;
pub mod numerics;
pub mod profit;
pub mod solver;

pub use boundary::{Boundary, BoundaryCurve};
pub use closed_form::ClosedFormBoundary;
pub use diffusion::{Diffusion, DiffusionSpec, PathSample};
pub use error::{Error, Result};
pub use exec::Execution;
pub use profit::{Profit, ProfitSpec};
pub use solver::{pointwise_solve, residual, solve_on_grid, SolverConfig};
