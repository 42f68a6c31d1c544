//! Monte Carlo checks of the probabilistic identities behind the free
//! boundary: the backward equation at an exponential time, the joint law of
//! `(X(τ_r), M(τ_r))`, the payoff of the reflection policy and the sign of the
//! supergradient.
//!
//! Discounted infinite-horizon quantities are estimated with an independent
//! clock `τ ~ Exp(r)`, using `E ∫_0^∞ e^{-rt} h(X_t) dt = E h(X_τ) / r`.
//! Every path draws from its own ChaCha stream `(base_seed, index)`; paths run
//! through [`Execution`] and are reduced in index order, so a report depends
//! only on its inputs.

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::boundary::Boundary;
use crate::closed_form::check_discount;
use crate::diffusion::{Diffusion, DiffusionSpec, PathState, DEFAULT_STEP};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::numerics::{bisect_monotone, log_cumulative, quad_with, QuadConfig, QuadResult};
use crate::profit::Profit;

/// `-ζ(1/2)/√(2π)`: the expected deficit of a Brownian maximum monitored on a
/// grid of mesh `h` is `β σ √h`.
pub const DISCRETE_MAX_BETA: f64 = 0.582_597_157_939_010_6;
/// Tolerance on the total mass of the joint density of `(X(τ), M(τ))`.
pub const JOINT_NORMALIZATION_TOL: f64 = 1e-8;
/// Smallest share of simulated mass the joint-law bins must cover.
pub const JOINT_MIN_COVERAGE: f64 = 0.999;
/// Cells with fewer expected hits are pooled.
pub const JOINT_MIN_EXPECTED: f64 = 5.0;

/// Generator for path `index` of a run seeded with `base_seed`.
pub fn path_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    pub paths: usize,
    pub step: f64,
    pub base_seed: u64,
    /// Pair each stream with its mirrored path; pairs count as one sample.
    pub antithetic: bool,
}

impl Default for MCConfig {
    fn default() -> Self {
        Self {
            paths: 100_000,
            step: DEFAULT_STEP,
            base_seed: 0,
            antithetic: false,
        }
    }
}

impl MCConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths < 100 {
            return Err(Error::InvalidInput(format!("at least 100 paths are required, got {}", self.paths)));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidInput(format!("step must be positive, got {}", self.step)));
        }
        if self.antithetic && self.paths % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "antithetic sampling needs an even number of paths, got {}",
                self.paths
            )));
        }
        Ok(())
    }
}

/// Which deviations from the target count against the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    /// Only `estimate > target` is a failure.
    AtMost,
    /// Only `estimate < target` is a failure.
    AtLeast,
}

/// Outcome of one check. The verdict is `|estimate - target| <= sigmas ·
/// stderr + bias_allowance`, restricted to one side for one-sided checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub name: String,
    pub target: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub z: f64,
    pub bias_allowance: f64,
    pub sigmas: f64,
    pub alternative: Alternative,
    pub samples: usize,
    pub pass: bool,
}

impl VerificationReport {
    pub fn new(
        name: impl Into<String>,
        target: f64,
        estimate: f64,
        stderr: f64,
        bias_allowance: f64,
        sigmas: f64,
        alternative: Alternative,
        samples: usize,
    ) -> Self {
        let dev = estimate - target;
        let slack = sigmas * stderr + bias_allowance;
        let pass = match alternative {
            Alternative::TwoSided => dev.abs() <= slack,
            Alternative::AtMost => dev <= slack,
            Alternative::AtLeast => -dev <= slack,
        };
        let z = if stderr > 0.0 {
            dev / stderr
        } else if dev == 0.0 {
            0.0
        } else {
            dev.signum() * f64::INFINITY
        };
        Self {
            name: name.into(),
            target,
            estimate,
            stderr,
            z,
            bias_allowance,
            sigmas,
            alternative,
            samples,
            pass,
        }
    }

    /// A deterministic check `|estimate - target| <= tol`.
    pub fn tolerance(name: impl Into<String>, target: f64, estimate: f64, tol: f64) -> Self {
        Self::new(name, target, estimate, 0.0, tol, 0.0, Alternative::TwoSided, 1)
    }

    /// A Monte Carlo check at `sigmas` standard errors.
    pub fn from_mean(
        name: impl Into<String>,
        target: f64,
        mean: SampleMean,
        bias_allowance: f64,
        sigmas: f64,
        alternative: Alternative,
    ) -> Self {
        Self::new(name, target, mean.mean, mean.stderr, bias_allowance, sigmas, alternative, mean.n)
    }
}

/// Sample mean with standard error `sd / √n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMean {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl SampleMean {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        let var = if n > 1 { ss / (n - 1) as f64 } else { 0.0 };
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            n,
        }
    }
}

/// Runs `f` once per path. With antithetic sampling paths `2k` and `2k+1`
/// share stream `k`, the second with negated Gaussians.
fn run_paths<T, F>(cfg: &MCConfig, stream_offset: u64, exec: Execution, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, bool) -> Result<T> + Sync + Send,
{
    exec.try_map(cfg.paths, |i| {
        let (stream, mirrored) = if cfg.antithetic { (i / 2, i % 2 == 1) } else { (i, false) };
        let mut rng = path_rng(cfg.base_seed, stream_offset + stream as u64);
        f(&mut rng, mirrored)
    })
}

/// Per-sample values, averaging antithetic pairs.
fn mean_of(cfg: &MCConfig, values: impl Iterator<Item = f64>) -> SampleMean {
    let v: Vec<f64> = values.collect();
    if cfg.antithetic {
        let pairs: Vec<f64> = v.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        SampleMean::of(&pairs)
    } else {
        SampleMean::of(&v)
    }
}

fn clock<R: Rng + ?Sized>(rng: &mut R, r: f64) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e / r
}

/// The running maximum moved up by the expected discrete-monitoring deficit.
/// GBM tracks its exact maximum, so nothing changes there.
fn corrected_max(d: &DiffusionSpec, m: f64, step: f64) -> f64 {
    match d {
        DiffusionSpec::Gbm { .. } => m,
        _ => m + DISCRETE_MAX_BETA * d.volatility(m) * step.sqrt(),
    }
}

fn exact_max(d: &DiffusionSpec) -> bool {
    matches!(d, DiffusionSpec::Gbm { .. })
}

fn check_inputs(d: &DiffusionSpec, x: f64, cfg: &MCConfig) -> Result<()> {
    d.validate()?;
    cfg.validate()?;
    if !d.contains(x) {
        let (lower, upper) = d.domain();
        return Err(Error::Domain { x, lower, upper });
    }
    Ok(())
}

fn check_boundary_at(b: &dyn Boundary, x: f64) -> Result<f64> {
    let v = b.value(x)?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidInput(format!("boundary value {v} at {x} is not a finite capacity")))
    }
}

fn capacity(b: &dyn Boundary, m: f64) -> Result<f64> {
    let c = b.value(m)?;
    if c > 0.0 && c.is_finite() {
        Ok(c)
    } else {
        Err(Error::Boundary(format!("capacity b(M) = {c} at M = {m} is not positive and finite")))
    }
}

/// `E_x[h(X(τ_r))] / r`, the discounted occupation integral of `h`.
pub fn clock_functional(
    d: &DiffusionSpec,
    x: f64,
    h: impl Fn(f64) -> f64 + Sync + Send,
    cfg: &MCConfig,
    exec: Execution,
) -> Result<SampleMean> {
    check_inputs(d, x, cfg)?;
    let r = d.discount();
    let values = run_paths(cfg, 0, exec, |rng, mirrored| {
        let tau = clock(rng, r);
        let mut st = d.start(x);
        d.advance_to(&mut st, tau, cfg.step, rng, mirrored);
        Ok(h(st.x) / r)
    })?;
    Ok(mean_of(cfg, values.into_iter()))
}

/// `E_x[π_c(X(τ_r), b(M(τ_r)))]` against the target `r`.
///
/// For grid-monitored maxima the bias allowance is the change of the estimate
/// when `M` is raised by `β σ(M) √step`.
pub fn verify_backward_equation(
    d: &DiffusionSpec,
    p: &dyn Profit,
    b: &dyn Boundary,
    x: f64,
    cfg: &MCConfig,
    exec: Execution,
) -> Result<VerificationReport> {
    check_inputs(d, x, cfg)?;
    check_discount(d, p)?;
    check_boundary_at(b, x)?;
    let r = d.discount();
    let exact = exact_max(d);
    let values = run_paths(cfg, 0, exec, |rng, mirrored| {
        let tau = clock(rng, r);
        let mut st = d.start(x);
        d.advance_to(&mut st, tau, cfg.step, rng, mirrored);
        let v = p.marginal(st.x, capacity(b, st.max)?);
        let shifted = if exact {
            v
        } else {
            p.marginal(st.x, capacity(b, corrected_max(d, st.max, cfg.step))?)
        };
        Ok((v, shifted))
    })?;
    let est = mean_of(cfg, values.iter().map(|v| v.0));
    let shifted = mean_of(cfg, values.iter().map(|v| v.1));
    Ok(VerificationReport::from_mean(
        format!("backward_equation x={x}"),
        r,
        est,
        (shifted.mean - est.mean).abs(),
        3.0,
        Alternative::TwoSided,
    ))
}

// Joint law of (X(τ), M(τ))

/// `P_x(X(τ_r) ∈ dy, M(τ_r) ∈ dz) / (dy dz) = r ψ_r(x) ψ_r(y) m'(y) s'(z) / ψ_r(z)²`
/// on `{y <= z, z >= x}`, zero elsewhere.
pub fn joint_density(d: &dyn Diffusion, x: f64, y: f64, z: f64) -> f64 {
    if !(y <= z && z >= x) || !d.contains(y) || !d.contains(z) {
        return 0.0;
    }
    let ln = d.discount().ln() + d.ln_psi(x) + d.ln_psi(y) + d.ln_speed_density(y) + d.ln_scale_density(z)
        - 2.0 * d.ln_psi(z);
    ln.exp()
}

fn quad_fallible(f: impl Fn(f64) -> Result<f64>, a: f64, b: f64, cfg: &QuadConfig) -> Result<QuadResult> {
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let out = quad_with(
        |t| match f(t) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        },
        a,
        b,
        cfg,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(out?)
}

fn ln_psi_speed(d: &dyn Diffusion, y: f64) -> f64 {
    d.ln_psi(y) + d.ln_speed_density(y)
}

/// `ln ∫_a^b ψ_r m' dy`.
fn ln_y_mass(d: &dyn Diffusion, a: f64, b: f64) -> Result<f64> {
    if b <= a {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(log_cumulative(|y| ln_psi_speed(d, y), a, &[b], &QuadConfig::relative(1e-12))?[0].ln_value)
}

/// `ln ∫_lower^y ψ_r m'`.
fn ln_y_mass_from_lower(d: &dyn Diffusion, y: f64) -> Result<f64> {
    let li = log_cumulative(|t| ln_psi_speed(d, t), d.domain().0, &[y], &QuadConfig::relative(1e-13))?;
    Ok(li[0].ln_value)
}

/// `r ψ_r(x) ∫ s'(z)/ψ_r(z)² w(z) dz` over `[za, zb] ∩ [x, upper)`, taken in
/// `u = ψ_r(x)/ψ_r(z)` where it reads `r ∫ s'/ψ_r' w du`. `ln_w` returns
/// `ln w`, since `w` and `s'` can overflow in opposite directions.
fn z_integral(
    d: &dyn Diffusion,
    x: f64,
    za: f64,
    zb: f64,
    ln_w: impl Fn(f64) -> Result<f64>,
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    let za = za.max(x);
    let upper = d.domain().1;
    let zb = zb.min(upper);
    if zb <= za {
        return Ok(QuadResult {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
        });
    }
    let lpx = d.ln_psi(x);
    let u_hi = (lpx - d.ln_psi(za)).exp().min(1.0);
    let u_lo = if zb < upper { (lpx - d.ln_psi(zb)).exp() } else { 0.0 };
    let r = d.discount();
    quad_fallible(
        |u| {
            let z = d.psi_inverse_ln(lpx - u.ln()).clamp(za, zb);
            Ok(r * (d.ln_scale_density(z) - d.ln_psi_prime(z) + ln_w(z)?).exp())
        },
        u_lo,
        u_hi,
        cfg,
    )
}

/// Total mass of [`joint_density`]: one, or the probability of surviving
/// past `τ_r` when the lower end absorbs.
pub fn joint_law_mass(d: &dyn Diffusion, x: f64) -> Result<QuadResult> {
    if !d.contains(x) {
        let (lower, upper) = d.domain();
        return Err(Error::Domain { x, lower, upper });
    }
    z_integral(d, x, x, f64::INFINITY, |z| ln_y_mass_from_lower(d, z), &QuadConfig::absolute(1e-12))
}

/// Rectangular bins in `(y, z) = (X(τ), M(τ))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointBins {
    pub y_edges: Vec<f64>,
    pub z_edges: Vec<f64>,
}

fn check_edges(name: &str, edges: &[f64]) -> Result<()> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) || !edges.iter().all(|e| e.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "{name} edges must be at least two strictly increasing finite values"
        )));
    }
    Ok(())
}

impl JointBins {
    pub fn new(y_edges: Vec<f64>, z_edges: Vec<f64>) -> Result<Self> {
        check_edges("y", &y_edges)?;
        check_edges("z", &z_edges)?;
        Ok(Self { y_edges, z_edges })
    }

    /// Log-spaced bins whose outer edges leave about `tail` of the mass
    /// below `y` and above `z` each: `P(M > z_hi) = ψ_r(x)/ψ_r(z_hi)` and
    /// `P(X < y_lo) = G(y_lo) · r ∫_0^1 s'/ψ_r' du` with `G = ∫ ψ_r m'`.
    pub fn covering(d: &dyn Diffusion, x: f64, n: usize, tail: f64) -> Result<Self> {
        if !(tail > 0.0 && tail < 0.5) || n < 1 {
            return Err(Error::InvalidInput(format!("need n >= 1 and tail in (0, 1/2), got {n}, {tail}")));
        }
        if !d.contains(x) || d.domain().0 < 0.0 {
            return Err(Error::InvalidInput(format!(
                "log-spaced bins need a state {x} inside a nonnegative domain"
            )));
        }
        let z_hi = d.psi_inverse_ln(d.ln_psi(x) - tail.ln());
        let scale = z_integral(d, x, x, f64::INFINITY, |_| Ok(0.0), &QuadConfig::relative(1e-10))?.value;
        let target = tail / scale;
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let y_lo = bisect_monotone(
            |y| {
                if !d.contains(y) {
                    return -1.0;
                }
                match ln_y_mass_from_lower(d, y) {
                    Ok(lg) => (lg - target.ln()).exp_m1(),
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            x,
            1e-6,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        let y_lo = y_lo?;
        Self::new(
            crate::boundary::log_grid(y_lo.min(0.5 * x), z_hi, n + 1)?,
            crate::boundary::log_grid(x, z_hi, n + 1)?,
        )
    }

    fn locate(edges: &[f64], v: f64) -> Option<usize> {
        if v < edges[0] || v > edges[edges.len() - 1] {
            return None;
        }
        Some(edges.partition_point(|e| *e <= v).clamp(1, edges.len() - 1) - 1)
    }

    /// `(y bin, z bin)` of a sample.
    pub fn cell(&self, y: f64, z: f64) -> Option<(usize, usize)> {
        Some((Self::locate(&self.y_edges, y)?, Self::locate(&self.z_edges, z)?))
    }

    fn shape(&self) -> (usize, usize) {
        (self.y_edges.len() - 1, self.z_edges.len() - 1)
    }

    /// Density mass of every cell, `[y bin][z bin]`.
    pub fn expected(&self, d: &dyn Diffusion, x: f64) -> Result<Vec<Vec<f64>>> {
        let (ny, nz) = self.shape();
        let cfg = QuadConfig {
            abs_tol: 1e-13,
            rel_tol: 1e-10,
            ..QuadConfig::default()
        };
        let mut out = vec![vec![0.0; nz]; ny];
        for (i, row) in out.iter_mut().enumerate() {
            let (ya, yb) = (self.y_edges[i], self.y_edges[i + 1]);
            for (j, cell) in row.iter_mut().enumerate() {
                let (za, zb) = (self.z_edges[j], self.z_edges[j + 1]);
                *cell = if ya >= zb {
                    0.0
                } else if yb <= za.max(x) {
                    let ln_y = ln_y_mass(d, ya, yb)?;
                    z_integral(d, x, za, zb, |_| Ok(ln_y), &cfg)?.value
                } else {
                    z_integral(d, x, za, zb, |z| ln_y_mass(d, ya, yb.min(z)), &cfg)?.value
                };
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Bin,
    /// Paths absorbed at the lower end before `τ_r`.
    Absorbed,
    /// Sparse cells and everything outside the bins.
    Pooled,
}

/// Observed against expected count of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointCell {
    pub kind: CellKind,
    pub y_bin: Option<usize>,
    pub z_bin: Option<usize>,
    pub expected: f64,
    pub observed: u64,
    pub z_score: f64,
    pub allowance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointLawReport {
    pub checks: Vec<VerificationReport>,
    pub normalization: f64,
    pub normalization_error: f64,
    pub expected_coverage: f64,
    pub empirical_coverage: f64,
    pub chi_square: f64,
    pub dof: usize,
    pub cells: Vec<JointCell>,
    pub pass: bool,
}

/// Compares binned samples of `(X(τ_r), M(τ_r))` with the joint density.
/// Cells expecting fewer than five hits are pooled with the mass outside
/// the bins; every remaining cell must lie within 4σ (binomial) plus, for
/// grid-monitored maxima, the count shift caused by raising `M` by
/// `β σ(M) √step`.
pub fn verify_joint_law(
    d: &DiffusionSpec,
    x: f64,
    bins: &JointBins,
    cfg: &MCConfig,
    exec: Execution,
) -> Result<JointLawReport> {
    check_inputs(d, x, cfg)?;
    if cfg.antithetic {
        return Err(Error::InvalidInput(
            "the joint-law check needs independent samples; disable antithetic sampling".into(),
        ));
    }
    let mass = joint_law_mass(d, x)?;
    let expected = bins.expected(d, x)?;
    let absorbing = d.lower_absorbing();
    let absorbed_p = if absorbing { (1.0 - mass.value).max(0.0) } else { 0.0 };
    let expected_coverage: f64 = expected.iter().flatten().sum::<f64>() + absorbed_p;
    if expected_coverage < JOINT_MIN_COVERAGE {
        return Err(Error::InvalidInput(format!(
            "bins hold only {:.5} of the density mass; at least {JOINT_MIN_COVERAGE} is required",
            expected_coverage
        )));
    }

    let r = d.discount();
    let samples = run_paths(cfg, 0, exec, |rng, _| {
        let tau = clock(rng, r);
        let mut st = d.start(x);
        d.advance_to(&mut st, tau, cfg.step, rng, false);
        Ok((st.x, st.max))
    })?;
    let n = samples.len();
    let (ny, nz) = bins.shape();
    let count = |shift: bool| {
        let mut counts = vec![vec![0u64; nz]; ny];
        let (mut outside, mut absorbed) = (0u64, 0u64);
        for &(y, m) in &samples {
            if absorbing && y <= 0.0 {
                absorbed += 1;
                continue;
            }
            let z = if shift { corrected_max(d, m, cfg.step) } else { m };
            match bins.cell(y, z) {
                Some((i, j)) => counts[i][j] += 1,
                None => outside += 1,
            }
        }
        (counts, outside, absorbed)
    };
    let (counts, outside, absorbed) = count(false);
    let exact = exact_max(d);
    let shifted = if exact { counts.clone() } else { count(true).0 };
    let empirical_coverage = 1.0 - outside as f64 / n as f64;
    if empirical_coverage < JOINT_MIN_COVERAGE {
        return Err(Error::InvalidInput(format!(
            "bins hold only {empirical_coverage:.5} of the simulated mass (density mass {expected_coverage:.5}); \
             at least {JOINT_MIN_COVERAGE} is required"
        )));
    }
    let support_violations = samples
        .iter()
        .filter(|(y, m)| *y > *m * (1.0 + 1e-12) || *m < x * (1.0 - 1e-12))
        .count();

    let nf = n as f64;
    let mut cells = Vec::new();
    let (mut pooled_p, mut pooled_o, mut pooled_s) = (1.0, n as u64, n as u64);
    if absorbing && nf * absorbed_p >= JOINT_MIN_EXPECTED {
        pooled_p -= absorbed_p;
        pooled_o -= absorbed;
        pooled_s -= absorbed;
        cells.push((CellKind::Absorbed, None, None, absorbed_p, absorbed, absorbed));
    }
    for i in 0..ny {
        for j in 0..nz {
            let p = expected[i][j];
            if nf * p >= JOINT_MIN_EXPECTED {
                pooled_p -= p;
                pooled_o -= counts[i][j];
                pooled_s -= shifted[i][j];
                cells.push((CellKind::Bin, Some(i), Some(j), p, counts[i][j], shifted[i][j]));
            }
        }
    }
    cells.push((CellKind::Pooled, None, None, pooled_p.max(0.0), pooled_o, pooled_s));
    let mut chi_square = 0.0;
    let cells: Vec<JointCell> = cells
        .into_iter()
        .map(|(kind, yi, zj, p, o, s)| {
            let e = nf * p;
            let sd = (e * (1.0 - p)).sqrt();
            if e > 0.0 {
                chi_square += (o as f64 - e).powi(2) / e;
            }
            JointCell {
                kind,
                y_bin: yi,
                z_bin: zj,
                expected: e,
                observed: o,
                z_score: (o as f64 - e) / sd,
                allowance: (s as f64 - o as f64).abs() / sd,
            }
        })
        .collect();
    let dof = cells.len().saturating_sub(1);
    let worst = cells
        .iter()
        .filter(|c| c.expected >= JOINT_MIN_EXPECTED)
        .max_by(|a, b| (a.z_score.abs() - a.allowance).total_cmp(&(b.z_score.abs() - b.allowance)))
        .copied();

    let mut checks = Vec::new();
    if !absorbing {
        checks.push(VerificationReport::tolerance(
            "joint_law_normalization",
            1.0,
            mass.value,
            JOINT_NORMALIZATION_TOL,
        ));
    }
    checks.push(VerificationReport::tolerance("joint_law_support", 0.0, support_violations as f64, 0.0));
    if let Some(w) = worst {
        checks.push(VerificationReport::new(
            "joint_law_max_deviation",
            0.0,
            w.z_score,
            1.0,
            w.allowance,
            4.0,
            Alternative::TwoSided,
            n,
        ));
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(JointLawReport {
        checks,
        normalization: mass.value,
        normalization_error: mass.abs_error,
        expected_coverage,
        empirical_coverage,
        chi_square,
        dof,
        cells,
        pass,
    })
}

// Reflection policy

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathDiagnostics {
    /// `ν(τ)`, cumulative investment up to the clock.
    pub investment: f64,
    /// `C(τ)`.
    pub final_capacity: f64,
}

/// Estimate of `J_{x,y}(ν) = E[∫ e^{-rt} π(X, C) dt - ∫ e^{-rt} dν]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutcome {
    pub estimate: f64,
    pub stderr: f64,
    pub profit_term: f64,
    pub cost_term: f64,
    pub mean_investment: f64,
    pub mean_final_capacity: f64,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_path: Vec<PathDiagnostics>,
}

/// Optimal policy against scaled boundaries, simulated with common random
/// numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub factors: Vec<f64>,
    pub outcomes: Vec<PolicyOutcome>,
    /// `J(b) - J(factor · b)` for each factor other than one.
    pub checks: Vec<VerificationReport>,
    pub pass: bool,
}

struct PolicySample {
    x: f64,
    max: f64,
}

fn policy_samples(
    d: &DiffusionSpec,
    x: f64,
    cfg: &MCConfig,
    exec: Execution,
) -> Result<Vec<PolicySample>> {
    let r = d.discount();
    run_paths(cfg, 0, exec, |rng, mirrored| {
        let tau = clock(rng, r);
        let mut st = d.start(x);
        d.advance_to(&mut st, tau, cfg.step, rng, mirrored);
        Ok(PolicySample { x: st.x, max: st.max })
    })
}

/// Per-path `(J, ν(τ), C(τ))` of the policy `C(t) = y ∨ sup_{s<t} factor·b(X(s))`.
/// Since `b` is nondecreasing the supremum is `b(M(t))`. The cost uses
/// `∫ e^{-rt} dν(t) = E ν(τ)`, so a single clock serves both terms.
fn policy_values(
    p: &dyn Profit,
    b: &dyn Boundary,
    factor: f64,
    y: f64,
    r: f64,
    samples: &[PolicySample],
    max_of: impl Fn(f64) -> f64,
) -> Result<Vec<(f64, f64, f64)>> {
    samples
        .iter()
        .map(|s| {
            let c = y.max(factor * check_boundary_at(b, max_of(s.max))?);
            let nu = c - y;
            Ok((p.profit(s.x, c) / r - nu, nu, c))
        })
        .collect()
}

fn outcome(cfg: &MCConfig, values: &[(f64, f64, f64)], keep: bool) -> PolicyOutcome {
    let j = mean_of(cfg, values.iter().map(|v| v.0));
    let nu = mean_of(cfg, values.iter().map(|v| v.1));
    let c = mean_of(cfg, values.iter().map(|v| v.2));
    PolicyOutcome {
        estimate: j.mean,
        stderr: j.stderr,
        profit_term: j.mean + nu.mean,
        cost_term: nu.mean,
        mean_investment: nu.mean,
        mean_final_capacity: c.mean,
        samples: j.n,
        per_path: if keep {
            values
                .iter()
                .map(|v| PathDiagnostics {
                    investment: v.1,
                    final_capacity: v.2,
                })
                .collect()
        } else {
            Vec::new()
        },
    }
}

fn check_policy_inputs(d: &DiffusionSpec, p: &dyn Profit, b: &dyn Boundary, x: f64, y: f64, cfg: &MCConfig) -> Result<()> {
    check_inputs(d, x, cfg)?;
    check_discount(d, p)?;
    check_boundary_at(b, x)?;
    if !(y >= 0.0 && y.is_finite()) {
        return Err(Error::InvalidInput(format!("initial capacity must be nonnegative, got {y}")));
    }
    Ok(())
}

/// Payoff of reflecting capacity off `b` from `(x, y)`.
pub fn policy_payoff(
    d: &DiffusionSpec,
    p: &dyn Profit,
    b: &dyn Boundary,
    x: f64,
    y: f64,
    cfg: &MCConfig,
    exec: Execution,
) -> Result<PolicyOutcome> {
    check_policy_inputs(d, p, b, x, y, cfg)?;
    let r = d.discount();
    let samples = policy_samples(d, x, cfg, exec)?;
    let values = policy_values(p, b, 1.0, y, r, &samples, |m| m)?;
    Ok(outcome(cfg, &values, true))
}

/// `J` for `factor · b` over `factors` on common paths, with checks
/// `J(b) >= J(factor · b)` at 3 standard errors of the paired difference.
pub fn policy_comparison(
    d: &DiffusionSpec,
    p: &dyn Profit,
    b: &dyn Boundary,
    x: f64,
    y: f64,
    factors: &[f64],
    cfg: &MCConfig,
    exec: Execution,
) -> Result<PolicyComparison> {
    check_policy_inputs(d, p, b, x, y, cfg)?;
    if factors.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
        return Err(Error::InvalidInput(format!("scale factors must be finite and nonnegative, got {factors:?}")));
    }
    let r = d.discount();
    let samples = policy_samples(d, x, cfg, exec)?;
    let exact = exact_max(d);
    let shift = |m: f64| corrected_max(d, m, cfg.step);
    let base = policy_values(p, b, 1.0, y, r, &samples, |m| m)?;
    let base_shifted = if exact { base.clone() } else { policy_values(p, b, 1.0, y, r, &samples, shift)? };
    let mut outcomes = Vec::new();
    let mut checks = Vec::new();
    for &f in factors {
        let vals = policy_values(p, b, f, y, r, &samples, |m| m)?;
        outcomes.push(outcome(cfg, &vals, false));
        if f == 1.0 {
            continue;
        }
        let diff = mean_of(cfg, base.iter().zip(&vals).map(|(a, c)| a.0 - c.0));
        let allowance = if exact {
            0.0
        } else {
            let shifted = policy_values(p, b, f, y, r, &samples, shift)?;
            let sd = mean_of(cfg, base_shifted.iter().zip(&shifted).map(|(a, c)| a.0 - c.0));
            (sd.mean - diff.mean).abs()
        };
        checks.push(VerificationReport::from_mean(
            format!("policy_optimality J(b)-J({f}b)"),
            0.0,
            diff,
            allowance,
            3.0,
            Alternative::AtLeast,
        ));
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(PolicyComparison {
        factors: factors.to_vec(),
        outcomes,
        checks,
        pass,
    })
}

/// One trajectory of the reflected capacity `C(t) = y ∨ b(M(t))` on the grid
/// `0, step, ..., horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityPath {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub capacity: Vec<f64>,
}

pub fn capacity_path(
    d: &DiffusionSpec,
    b: &dyn Boundary,
    x: f64,
    y: f64,
    step: f64,
    horizon: f64,
    seed: u64,
) -> Result<CapacityPath> {
    let sample = crate::diffusion::simulate_path(d, x, step, horizon, seed)?;
    let capacity = sample
        .running_max
        .iter()
        .map(|&m| Ok(y.max(check_boundary_at(b, m)?)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(CapacityPath {
        times: sample.times,
        states: sample.states,
        capacity,
    })
}

// First-order conditions

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocReport {
    pub checks: Vec<VerificationReport>,
    pub pass: bool,
}

struct FocSample {
    gradient: f64,
    slack: f64,
    slack_on_boundary: f64,
}

/// Continues a path of the reflection policy for an independent clock and
/// returns `π_c(X, C)/r - 1` at its end.
fn marginal_gap<R: Rng + ?Sized>(
    d: &DiffusionSpec,
    p: &dyn Profit,
    b: &dyn Boundary,
    st: &PathState,
    c0: f64,
    step: f64,
    rng: &mut R,
    mirrored: bool,
) -> Result<f64> {
    let r = d.discount();
    let mut s = *st;
    s.reset_max();
    s.t = 0.0;
    let tau = clock(rng, r);
    d.advance_to(&mut s, tau, step, rng, mirrored);
    let c = c0.max(capacity(b, s.max)?);
    Ok(p.marginal(s.x, c) / r - 1.0)
}

/// Supergradient `∇J(t) = E ∫_t^∞ e^{-rs} π_c(X(s), C(s)) ds - e^{-rt}` of the
/// reflection policy at deterministic probe times, estimated as
/// `e^{-rt} (E π_c(X(t+τ), C(t+τ))/r - 1)` with a fresh clock from `t`.
///
/// Checks per probe: `∇J(t) <= 0` at 3σ (two-sided `= 0` at `t = 0` when
/// `y <= b(x)`, where investment starts immediately), and complementary
/// slackness `E[e^{-rσ} ∇J(σ) e^{rσ}] = 0` at the first investment time
/// `σ >= t`. Investment is detected on the grid, so `C(σ)` can overshoot
/// `b(X(σ))`; the allowance is the change of the slackness estimate when
/// `C(σ)` is set to `b(X(σ))`.
pub fn foc_spot_check(
    d: &DiffusionSpec,
    p: &dyn Profit,
    b: &dyn Boundary,
    x: f64,
    y: f64,
    probe_times: &[f64],
    cfg: &MCConfig,
    exec: Execution,
) -> Result<FocReport> {
    check_policy_inputs(d, p, b, x, y, cfg)?;
    if let Some(t) = probe_times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidInput(format!("probe times must be finite and nonnegative, got {t}")));
    }
    let r = d.discount();
    let b_x = check_boundary_at(b, x)?;
    let mut checks = Vec::new();
    for (k, &t) in probe_times.iter().enumerate() {
        let offset = ((k as u64) + 1) << 40;
        let samples = run_paths(cfg, offset, exec, |rng, mirrored| {
            let mut st = d.start(x);
            d.advance_to(&mut st, t, cfg.step, rng, mirrored);
            let mut c = y.max(capacity(b, st.max)?);
            let gradient = marginal_gap(d, p, b, &st, c, cfg.step, rng, mirrored)?;
            // first investment at or after t, killed at an independent clock
            let invested_now = t == 0.0 && y <= b_x;
            let deadline = st.t + clock(rng, r);
            let mut found = invested_now;
            while !found && st.t < deadline {
                let h = cfg.step.min(deadline - st.t);
                if h <= 1e-15 * deadline.max(1.0) {
                    break;
                }
                let prev = st.max;
                d.advance(&mut st, h, rng, mirrored);
                if st.max > prev {
                    let next = capacity(b, st.max)?;
                    if next > c {
                        c = next;
                        found = true;
                    }
                }
            }
            let (slack, slack_on_boundary) = if found {
                let mut fork = rng.clone();
                let actual = marginal_gap(d, p, b, &st, c, cfg.step, rng, mirrored)?;
                let ideal = if invested_now {
                    actual
                } else {
                    marginal_gap(d, p, b, &st, capacity(b, st.x)?, cfg.step, &mut fork, mirrored)?
                };
                (actual, ideal)
            } else {
                (0.0, 0.0)
            };
            Ok(FocSample {
                gradient,
                slack,
                slack_on_boundary,
            })
        })?;
        let disc = (-r * t).exp();
        let grad = mean_of(cfg, samples.iter().map(|s| disc * s.gradient));
        let slack = mean_of(cfg, samples.iter().map(|s| disc * s.slack));
        let ideal = mean_of(cfg, samples.iter().map(|s| disc * s.slack_on_boundary));
        let at_boundary = t == 0.0 && y <= b_x;
        checks.push(VerificationReport::from_mean(
            format!("supergradient t={t}"),
            0.0,
            grad,
            0.0,
            3.0,
            if at_boundary { Alternative::TwoSided } else { Alternative::AtMost },
        ));
        checks.push(VerificationReport::from_mean(
            format!("complementary_slackness t={t}"),
            0.0,
            slack,
            (ideal.mean - slack.mean).abs(),
            3.0,
            Alternative::TwoSided,
        ));
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(FocReport { checks, pass })
}
