//! Generic free-boundary solver.
//!
//! Differentiating the integral equation in `x` gives the scalar equation
//!
//! ```text
//! ∫_lower^x π_c(y, b) ψ_r(y) m'(y) dy = ψ_r'(x) / s'(x)
//! ```
//!
//! whose left side is strictly decreasing in `b`. [`pointwise_solve`] solves it
//! point by point; [`residual`] evaluates the undifferentiated equation for any
//! boundary, which certifies the differentiation step a posteriori.

use std::cell::{Cell, RefCell};

use serde::{Deserialize, Serialize};

use crate::boundary::{Boundary, BoundaryCurve};
use crate::closed_form::check_discount;
use crate::diffusion::Diffusion;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::numerics::{bisect_monotone, log_cumulative, quad_with, LogIntegral, NumericsError, QuadConfig};
use crate::profit::{PowerTerm, Profit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative tolerance of the inner integrals.
    pub inner_rel_tol: f64,
    /// Relative bracket width at which bisection in `b` stops.
    pub root_tol: f64,
    /// Accepted relative residual of the pointwise equation.
    pub pointwise_tol: f64,
    /// Absolute tolerance of the outer residual integral.
    pub outer_abs_tol: f64,
    /// Use the power expansion of `π_c` when the profit provides one.
    pub use_power_terms: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            inner_rel_tol: 1e-13,
            root_tol: 1e-14,
            pointwise_tol: 1e-10,
            outer_abs_tol: 1e-10,
            use_power_terms: true,
        }
    }
}

impl SolverConfig {
    fn inner(&self) -> QuadConfig {
        QuadConfig::relative(self.inner_rel_tol)
    }
}

fn check_grid(d: &dyn Diffusion, grid: &[f64]) -> Result<()> {
    for &x in grid {
        if !d.contains(x) {
            let (lower, upper) = d.domain();
            return Err(Error::Domain { x, lower, upper });
        }
    }
    if let Some(i) = grid.windows(2).position(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput(format!(
            "grid must be strictly increasing (indices {i} and {})",
            i + 1
        )));
    }
    Ok(())
}

/// `ln(ψ_r'(x) / s'(x))`, the right-hand side of the pointwise equation.
fn ln_rhs(d: &dyn Diffusion, x: f64) -> f64 {
    d.ln_psi_prime(x) - d.ln_scale_density(x)
}

/// `ln ∫_lower^{x_i} y^p ψ_r(y) m'(y) dy` along the grid.
fn power_integrals(d: &dyn Diffusion, term: &PowerTerm, grid: &[f64], cfg: &SolverConfig) -> Result<Vec<LogIntegral>> {
    let p = term.x_power;
    Ok(log_cumulative(
        |y: f64| p * y.ln() + d.ln_psi(y) + d.ln_speed_density(y),
        d.domain().0,
        grid,
        &cfg.inner(),
    )?)
}

/// `ln ∫_lower^x π_c(y, b) ψ_r(y) m'(y) dy`.
fn ln_inner(d: &dyn Diffusion, p: &dyn Profit, b: f64, x: f64, cfg: &SolverConfig) -> Result<LogIntegral> {
    Ok(log_cumulative(
        |y: f64| p.marginal(y, b).ln() + d.ln_psi(y) + d.ln_speed_density(y),
        d.domain().0,
        &[x],
        &cfg.inner(),
    )?[0])
}

fn no_crossing(x: f64, e: NumericsError) -> Error {
    match e {
        NumericsError::NoSignChange { lo, hi } => Error::Boundary(format!(
            "pointwise equation at x = {x} has no solution for b in [{lo:e}, {hi:e}]; \
             the profit may not be integrable against the speed measure"
        )),
        other => other.into(),
    }
}

// Σ_j coef_j b^{q_j} J_j / RHS - 1, with everything in logs.
fn solve_power_sum(x: f64, terms: &[PowerTerm], ln_j: &[f64], ln_rhs: f64, cfg: &SolverConfig) -> Result<f64> {
    let excess = |b: f64| {
        let lb = b.ln();
        terms
            .iter()
            .zip(ln_j)
            .map(|(t, lj)| (t.coef.ln() + t.c_power * lb + lj - ln_rhs).exp())
            .sum::<f64>()
            - 1.0
    };
    let b = bisect_monotone(excess, x, cfg.root_tol).map_err(|e| no_crossing(x, e))?;
    let residual = excess(b);
    if residual.abs() > cfg.pointwise_tol {
        return Err(Error::Boundary(format!(
            "pointwise equation at x = {x} only solved to relative residual {residual:e}"
        )));
    }
    Ok(b)
}

fn solve_generic(d: &dyn Diffusion, p: &dyn Profit, x: f64, cfg: &SolverConfig) -> Result<f64> {
    let rhs = ln_rhs(d, x);
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let excess = |b: f64| match ln_inner(d, p, b, x, cfg) {
        Ok(li) => (li.ln_value - rhs).exp_m1(),
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let found = bisect_monotone(excess, x, cfg.root_tol);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let b = found.map_err(|e| no_crossing(x, e))?;
    let residual = (ln_inner(d, p, b, x, cfg)?.ln_value - rhs).exp_m1();
    if residual.abs() > cfg.pointwise_tol {
        return Err(Error::Boundary(format!(
            "pointwise equation at x = {x} only solved to relative residual {residual:e}"
        )));
    }
    Ok(b)
}

/// The boundary at a single state.
pub fn pointwise_solve(d: &dyn Diffusion, p: &dyn Profit, x: f64, cfg: &SolverConfig) -> Result<f64> {
    check_discount(d, p)?;
    check_grid(d, &[x])?;
    match p.power_terms().filter(|_| cfg.use_power_terms) {
        Some(terms) => {
            let ln_j = terms
                .iter()
                .map(|t| Ok(power_integrals(d, t, &[x], cfg)?[0].ln_value))
                .collect::<Result<Vec<f64>>>()?;
            solve_power_sum(x, &terms, &ln_j, ln_rhs(d, x), cfg)
        }
        None => solve_generic(d, p, x, cfg),
    }
}

/// Pointwise solutions on an increasing grid, assembled into a curve whose
/// monotonicity is checked. With a power expansion of `π_c` the capacity-free
/// integrals are accumulated once along the grid and every point reduces to a
/// scalar root; otherwise points are solved independently.
pub fn solve_on_grid(
    d: &dyn Diffusion,
    p: &dyn Profit,
    grid: &[f64],
    cfg: &SolverConfig,
    exec: Execution,
) -> Result<BoundaryCurve> {
    check_discount(d, p)?;
    check_grid(d, grid)?;
    let values = match p.power_terms().filter(|_| cfg.use_power_terms) {
        Some(terms) => {
            let integrals = exec.try_map(terms.len(), |j| power_integrals(d, &terms[j], grid, cfg))?;
            exec.try_map(grid.len(), |i| {
                let ln_j: Vec<f64> = integrals.iter().map(|col| col[i].ln_value).collect();
                solve_power_sum(grid[i], &terms, &ln_j, ln_rhs(d, grid[i]), cfg)
            })?
        }
        None => exec.try_map(grid.len(), |i| solve_generic(d, p, grid[i], cfg))?,
    };
    BoundaryCurve::new(grid.to_vec(), values)
}

/// A boundary evaluated by solving the pointwise equation on demand.
#[derive(Debug, Clone, Copy)]
pub struct PointwiseBoundary<'a> {
    pub diffusion: &'a dyn Diffusion,
    pub profit: &'a dyn Profit,
    pub config: SolverConfig,
}

impl<'a> PointwiseBoundary<'a> {
    pub fn new(diffusion: &'a dyn Diffusion, profit: &'a dyn Profit) -> Result<Self> {
        check_discount(diffusion, profit)?;
        Ok(Self {
            diffusion,
            profit,
            config: SolverConfig::default(),
        })
    }
}

impl Boundary for PointwiseBoundary<'_> {
    fn value(&self, x: f64) -> Result<f64> {
        pointwise_solve(self.diffusion, self.profit, x, &self.config)
    }

    fn values(&self, grid: &[f64]) -> Result<Vec<f64>> {
        Ok(solve_on_grid(self.diffusion, self.profit, grid, &self.config, Execution::Sequential)?
            .values()
            .to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub x: f64,
    /// Left side of the integral equation minus one.
    pub residual: f64,
    /// Quadrature error bound on `residual`.
    pub quad_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub points: Vec<ResidualPoint>,
    pub max_abs_residual: f64,
    pub quad_error_budget: f64,
}

/// `ψ_r(x) ∫_x^upper (∫_lower^z π_c(y, b(z)) ψ_r(y) m'(y) dy) s'(z)/ψ_r(z)² dz - 1`.
///
/// The outer integral is taken in `u = ψ_r(x)/ψ_r(z)`, which maps `[x, upper)`
/// onto `(ψ_r(x)/ψ_r(upper), 1]` and turns the integrand into
/// `H(z) = F(z) s'(z)/ψ_r'(z)`, bounded and close to one near the solution.
/// No tail truncation is involved whatever the decay rate in `z`.
pub fn residual(
    d: &dyn Diffusion,
    p: &dyn Profit,
    boundary: &dyn Boundary,
    x: f64,
    cfg: &SolverConfig,
) -> Result<ResidualPoint> {
    check_discount(d, p)?;
    check_grid(d, &[x])?;
    let ln_psi_x = d.ln_psi(x);
    let upper = d.domain().1;
    let u_min = if upper.is_finite() {
        (ln_psi_x - d.ln_psi(upper)).exp()
    } else {
        0.0
    };
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let inner_rel = Cell::new(0.0f64);
    let integrand = |u: f64| {
        if u <= u_min {
            return 0.0;
        }
        let z = if u >= 1.0 { x } else { d.psi_inverse_ln(ln_psi_x - u.ln()) };
        let inner = boundary.value(z).and_then(|b| {
            if b > 0.0 && b.is_finite() {
                ln_inner(d, p, b, z, cfg)
            } else {
                Err(Error::Boundary(format!("boundary value {b} at {z} is not positive and finite")))
            }
        });
        match inner {
            Ok(li) => {
                inner_rel.set(inner_rel.get().max(li.rel_error));
                (li.ln_value + d.ln_scale_density(z) - d.ln_psi_prime(z)).exp()
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let cfg_outer = QuadConfig {
        abs_tol: cfg.outer_abs_tol,
        rel_tol: 0.0,
        ..QuadConfig::default()
    };
    let outer = quad_with(integrand, u_min, 1.0, &cfg_outer);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let outer = outer?;
    Ok(ResidualPoint {
        x,
        residual: outer.value - 1.0,
        quad_error: outer.abs_error + inner_rel.get() * outer.value.abs(),
    })
}

/// [`residual`] at every grid point.
pub fn residual_report(
    d: &dyn Diffusion,
    p: &dyn Profit,
    boundary: &dyn Boundary,
    grid: &[f64],
    cfg: &SolverConfig,
    exec: Execution,
) -> Result<ResidualReport> {
    let points = exec.try_map(grid.len(), |i| residual(d, p, boundary, grid[i], cfg))?;
    Ok(ResidualReport {
        max_abs_residual: points.iter().map(|p| p.residual.abs()).fold(0.0, f64::max),
        quad_error_budget: points.iter().map(|p| p.quad_error).fold(0.0, f64::max),
        points,
    })
}
