//! One-dimensional regular diffusions `dX = μ(X)dt + σ(X)dW` described by the
//! objects the free-boundary equation consumes: scale density `s'`, speed
//! density `m'`, and the increasing solution `ψ_r` of `Gu = ru` together with
//! its derivatives.
//!
//! Three families ship with closed forms (geometric Brownian motion, the
//! three-dimensional Bessel process and the CEV process with drift rate equal
//! to the discount rate). Other diffusions plug in by implementing
//! [`Diffusion`] directly.

use std::f64::consts::LN_2;
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Decay;

/// Default volatility floor used by the CEV Euler scheme near zero.
pub const CEV_VOL_FLOOR: f64 = 1e-12;

/// Default simulation step (time units).
pub const DEFAULT_STEP: f64 = 1e-3;

/// Closed-form description of a regular diffusion on `(lower, upper)`.
///
/// Density and eigenfunction methods do not check their argument; use the
/// free functions of this module ([`scale_density`], [`psi`], ...) for
/// validated access. The `ln_*` variants exist so that callers can combine
/// factors that individually overflow; implementors with exponential growth
/// should override them.
pub trait Diffusion: Send + Sync + fmt::Debug {
    /// Discount rate `r` shared with the optimisation problem.
    fn discount(&self) -> f64;
    fn domain(&self) -> (f64, f64);
    fn drift(&self, x: f64) -> f64;
    fn volatility(&self, x: f64) -> f64;
    fn scale_density(&self, x: f64) -> f64;
    fn speed_density(&self, x: f64) -> f64;
    fn psi(&self, x: f64) -> f64;
    fn psi_prime(&self, x: f64) -> f64;

    fn psi_second(&self, x: f64) -> f64 {
        let h = 1e-5 * x.abs().max(1e-3);
        (self.psi_prime(x + h) - self.psi_prime(x - h)) / (2.0 * h)
    }

    fn ln_scale_density(&self, x: f64) -> f64 {
        self.scale_density(x).ln()
    }

    fn ln_speed_density(&self, x: f64) -> f64 {
        self.speed_density(x).ln()
    }

    fn ln_psi(&self, x: f64) -> f64 {
        self.psi(x).ln()
    }

    fn ln_psi_prime(&self, x: f64) -> f64 {
        self.psi_prime(x).ln()
    }

    /// The state `z` with `ln ψ_r(z) = v`. The default bisects `ln_psi`
    /// over the domain.
    fn psi_inverse_ln(&self, v: f64) -> f64 {
        let (lo, hi) = self.domain();
        let (mut a, mut b) = if hi.is_finite() {
            (lo, hi)
        } else {
            let mut b = lo.max(0.0) + 1.0;
            while self.ln_psi(b) < v && b < f64::MAX / 4.0 {
                b *= 2.0;
            }
            (lo, b)
        };
        for _ in 0..2100 {
            let mid = if a > 0.0 && b / a > 4.0 { (a * b).sqrt() } else { 0.5 * (a + b) };
            if mid <= a || mid >= b {
                break;
            }
            if self.ln_psi(mid) < v {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    /// How `ψ_r(x) ∫_x^∞ (...) s(dz)/ψ_r²(z)` integrands fall off.
    fn tail_decay(&self) -> Decay {
        Decay::Algebraic
    }

    /// Whether the lower end is reached in finite time and absorbs
    /// (`ψ_r` vanishes there). Laws built from `ψ_r` then describe the
    /// process before absorption only.
    fn lower_absorbing(&self) -> bool {
        false
    }

    fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.domain();
        x > lo && x < hi
    }
}

fn check_state(d: &dyn Diffusion, x: f64) -> Result<()> {
    if d.contains(x) {
        Ok(())
    } else {
        let (lower, upper) = d.domain();
        Err(Error::Domain { x, lower, upper })
    }
}

/// `s'(x)`, rejecting states outside the open domain.
pub fn scale_density(d: &dyn Diffusion, x: f64) -> Result<f64> {
    check_state(d, x)?;
    Ok(d.scale_density(x))
}

/// `m'(x)`, rejecting states outside the open domain.
pub fn speed_density(d: &dyn Diffusion, x: f64) -> Result<f64> {
    check_state(d, x)?;
    Ok(d.speed_density(x))
}

/// `ψ_r(x)`, rejecting states outside the open domain.
pub fn psi(d: &dyn Diffusion, x: f64) -> Result<f64> {
    check_state(d, x)?;
    Ok(d.psi(x))
}

/// `ψ_r'(x)`, rejecting states outside the open domain.
pub fn psi_prime(d: &dyn Diffusion, x: f64) -> Result<f64> {
    check_state(d, x)?;
    Ok(d.psi_prime(x))
}

/// Positive root of `½σ²γ(γ-1) + μγ = r`.
pub fn gamma1(mu: f64, sigma: f64, r: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("volatility must be positive, got {sigma}")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidInput(format!("discount rate must be positive, got {r}")));
    }
    if !mu.is_finite() {
        return Err(Error::InvalidInput(format!("drift must be finite, got {mu}")));
    }
    Ok(gamma1_unchecked(mu, sigma, r))
}

fn gamma1_unchecked(mu: f64, sigma: f64, r: f64) -> f64 {
    // a γ² + b γ - r = 0
    let a = 0.5 * sigma * sigma;
    let b = mu - a;
    let disc = (b * b + 4.0 * a * r).sqrt();
    if b > 0.0 {
        2.0 * r / (b + disc)
    } else {
        (disc - b) / (2.0 * a)
    }
}

/// Built-in diffusion families, serialized with a `kind` tag:
/// `{"kind":"gbm","mu":0.0,"sigma":1.0,"r":0.5}`, `{"kind":"bessel3","r":0.5}`,
/// `{"kind":"cev","r":1.5,"sigma":1.0,"gamma":0.5}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionSpec {
    /// Geometric Brownian motion `dX = μX dt + σX dW`.
    Gbm { mu: f64, sigma: f64, r: f64 },
    /// Three-dimensional Bessel process `dX = dt/X + dW`.
    Bessel3 { r: f64 },
    /// CEV process `dX = rX dt + σX^{1-γ} dW`, `γ ∈ (0, 1/2]`.
    Cev {
        r: f64,
        sigma: f64,
        gamma: f64,
        #[serde(default = "default_vol_floor", skip_serializing_if = "is_default_floor")]
        vol_floor: f64,
    },
}

fn default_vol_floor() -> f64 {
    CEV_VOL_FLOOR
}

fn is_default_floor(v: &f64) -> bool {
    *v == CEV_VOL_FLOOR
}

impl DiffusionSpec {
    pub fn gbm(mu: f64, sigma: f64, r: f64) -> Result<Self> {
        let spec = DiffusionSpec::Gbm { mu, sigma, r };
        spec.validate()?;
        Ok(spec)
    }

    pub fn bessel3(r: f64) -> Result<Self> {
        let spec = DiffusionSpec::Bessel3 { r };
        spec.validate()?;
        Ok(spec)
    }

    pub fn cev(r: f64, sigma: f64, gamma: f64) -> Result<Self> {
        let spec = DiffusionSpec::Cev {
            r,
            sigma,
            gamma,
            vol_floor: CEV_VOL_FLOOR,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match *self {
            DiffusionSpec::Gbm { mu, sigma, r } => {
                positive("sigma", sigma)?;
                positive("r", r)?;
                if !mu.is_finite() {
                    return Err(Error::InvalidInput(format!("mu must be finite, got {mu}")));
                }
            }
            DiffusionSpec::Bessel3 { r } => positive("r", r)?,
            DiffusionSpec::Cev {
                r,
                sigma,
                gamma,
                vol_floor,
            } => {
                positive("r", r)?;
                positive("sigma", sigma)?;
                positive("vol_floor", vol_floor)?;
                if !(gamma > 0.0 && gamma <= 0.5) {
                    return Err(Error::InvalidInput(format!(
                        "CEV elasticity gamma must lie in (0, 1/2], got {gamma}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `δ = μ/σ² - 1/2` for GBM.
    pub fn gbm_delta(&self) -> Option<f64> {
        match *self {
            DiffusionSpec::Gbm { mu, sigma, .. } => Some(mu / (sigma * sigma) - 0.5),
            _ => None,
        }
    }

    /// `γ₁` for GBM.
    pub fn gbm_gamma1(&self) -> Option<f64> {
        match *self {
            DiffusionSpec::Gbm { mu, sigma, r } => Some(gamma1_unchecked(mu, sigma, r)),
            _ => None,
        }
    }

    /// `r / (γσ²)`, the exponent rate of the CEV scale density.
    fn cev_rate(r: f64, sigma: f64, gamma: f64) -> f64 {
        r / (gamma * sigma * sigma)
    }

    pub fn name(&self) -> &'static str {
        match self {
            DiffusionSpec::Gbm { .. } => "gbm",
            DiffusionSpec::Bessel3 { .. } => "bessel3",
            DiffusionSpec::Cev { .. } => "cev",
        }
    }
}

// sinh(u)/u
fn sinhc(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        1.0 + u * u / 6.0
    } else {
        u.sinh() / u
    }
}

// (u cosh u - sinh u) / u², which behaves like u/3 near zero.
fn bessel_d1(u: f64) -> f64 {
    if u < 0.5 {
        // Σ_{j>=1} 2j u^{2j-1} / (2j+1)!
        let mut sum = 0.0;
        let mut fact = 6.0; // (2j+1)! for j = 1
        let mut pow = u;
        for j in 1..30 {
            let term = 2.0 * j as f64 * pow / fact;
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
            pow *= u * u;
            fact *= (2 * j + 2) as f64 * (2 * j + 3) as f64;
        }
        sum
    } else {
        (u * u.cosh() - u.sinh()) / (u * u)
    }
}

// ((u² + 2) sinh u - 2u cosh u) / u³, which tends to 1/3 at zero.
fn bessel_d2(u: f64) -> f64 {
    if u < 0.5 {
        // Σ_{m>=1} 2m(2m-1) u^{2m-2} / (2m+1)!
        let mut sum = 0.0;
        let mut fact = 6.0;
        let mut pow = 1.0;
        for m in 1..30 {
            let mf = m as f64;
            let term = 2.0 * mf * (2.0 * mf - 1.0) * pow / fact;
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
            pow *= u * u;
            fact *= (2 * m + 2) as f64 * (2 * m + 3) as f64;
        }
        sum
    } else {
        ((u * u + 2.0) * u.sinh() - 2.0 * u * u.cosh()) / (u * u * u)
    }
}

// ln(sinh(u) / u)
fn ln_sinhc(u: f64) -> f64 {
    if u > 20.0 {
        u - LN_2 + (-(-2.0 * u).exp()).ln_1p() - u.ln()
    } else {
        sinhc(u).ln()
    }
}

// ln((u cosh u - sinh u) / u²)
fn ln_bessel_d1(u: f64) -> f64 {
    if u > 20.0 {
        u - LN_2 + ((u - 1.0) + (u + 1.0) * (-2.0 * u).exp()).ln() - 2.0 * u.ln()
    } else {
        bessel_d1(u).ln()
    }
}

impl Diffusion for DiffusionSpec {
    fn discount(&self) -> f64 {
        match *self {
            DiffusionSpec::Gbm { r, .. } | DiffusionSpec::Bessel3 { r } | DiffusionSpec::Cev { r, .. } => r,
        }
    }

    fn domain(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn drift(&self, x: f64) -> f64 {
        match *self {
            DiffusionSpec::Gbm { mu, .. } => mu * x,
            DiffusionSpec::Bessel3 { .. } => 1.0 / x,
            DiffusionSpec::Cev { r, .. } => r * x,
        }
    }

    fn volatility(&self, x: f64) -> f64 {
        match *self {
            DiffusionSpec::Gbm { sigma, .. } => sigma * x,
            DiffusionSpec::Bessel3 { .. } => 1.0,
            DiffusionSpec::Cev { sigma, gamma, .. } => sigma * x.powf(1.0 - gamma),
        }
    }

    fn scale_density(&self, x: f64) -> f64 {
        match *self {
            DiffusionSpec::Gbm { .. } => {
                let delta = self.gbm_delta().unwrap();
                if delta == 0.0 {
                    1.0 / x
                } else {
                    x.powf(-2.0 * delta - 1.0)
                }
            }
            DiffusionSpec::Bessel3 { .. } => 1.0 / (x * x),
            DiffusionSpec::Cev { .. } => self.ln_scale_density(x).exp(),
        }
    }

    fn speed_density(&self, x: f64) -> f64 {
        match *self {
            DiffusionSpec::Gbm { sigma, .. } => {
                let delta = self.gbm_delta().unwrap();
                2.0 / (sigma * sigma) * x.powf(2.0 * delta - 1.0)
            }
            DiffusionSpec::Bessel3 { .. } => 2.0 * x * x,
            DiffusionSpec::Cev { .. } => self.ln_speed_density(x).exp(),
        }
    }

    fn psi(&self, x: f64) -> f64 {
        match *self {
            DiffusionSpec::Gbm { .. } => x.powf(self.gbm_gamma1().unwrap()),
            DiffusionSpec::Bessel3 { r } => {
                let k = (2.0 * r).sqrt();
                k * sinhc(k * x)
            }
            DiffusionSpec::Cev { .. } => x,
        }
    }

    fn psi_prime(&self, x: f64) -> f64 {
        match *self {
            DiffusionSpec::Gbm { .. } => {
                let g = self.gbm_gamma1().unwrap();
                g * x.powf(g - 1.0)
            }
            DiffusionSpec::Bessel3 { r } => {
                let k = (2.0 * r).sqrt();
                k * k * bessel_d1(k * x)
            }
            DiffusionSpec::Cev { .. } => 1.0,
        }
    }

    fn psi_second(&self, x: f64) -> f64 {
        match *self {
            DiffusionSpec::Gbm { .. } => {
                let g = self.gbm_gamma1().unwrap();
                g * (g - 1.0) * x.powf(g - 2.0)
            }
            DiffusionSpec::Bessel3 { r } => {
                let k = (2.0 * r).sqrt();
                k * k * k * bessel_d2(k * x)
            }
            DiffusionSpec::Cev { .. } => 0.0,
        }
    }

    fn ln_scale_density(&self, x: f64) -> f64 {
        match *self {
            DiffusionSpec::Gbm { .. } => {
                let delta = self.gbm_delta().unwrap();
                -(2.0 * delta + 1.0) * x.ln()
            }
            DiffusionSpec::Bessel3 { .. } => -2.0 * x.ln(),
            DiffusionSpec::Cev { r, sigma, gamma, .. } => {
                -Self::cev_rate(r, sigma, gamma) * x.powf(2.0 * gamma)
            }
        }
    }

    fn ln_speed_density(&self, x: f64) -> f64 {
        match *self {
            DiffusionSpec::Gbm { sigma, .. } => {
                let delta = self.gbm_delta().unwrap();
                (2.0 / (sigma * sigma)).ln() + (2.0 * delta - 1.0) * x.ln()
            }
            DiffusionSpec::Bessel3 { .. } => LN_2 + 2.0 * x.ln(),
            DiffusionSpec::Cev { r, sigma, gamma, .. } => {
                (2.0 / (sigma * sigma)).ln() - 2.0 * (1.0 - gamma) * x.ln()
                    + Self::cev_rate(r, sigma, gamma) * x.powf(2.0 * gamma)
            }
        }
    }

    fn ln_psi(&self, x: f64) -> f64 {
        match *self {
            DiffusionSpec::Gbm { .. } => self.gbm_gamma1().unwrap() * x.ln(),
            DiffusionSpec::Bessel3 { r } => {
                let k = (2.0 * r).sqrt();
                k.ln() + ln_sinhc(k * x)
            }
            DiffusionSpec::Cev { .. } => x.ln(),
        }
    }

    fn ln_psi_prime(&self, x: f64) -> f64 {
        match *self {
            DiffusionSpec::Gbm { .. } => {
                let g = self.gbm_gamma1().unwrap();
                g.ln() + (g - 1.0) * x.ln()
            }
            DiffusionSpec::Bessel3 { r } => {
                let k = (2.0 * r).sqrt();
                2.0 * k.ln() + ln_bessel_d1(k * x)
            }
            DiffusionSpec::Cev { .. } => 0.0,
        }
    }

    fn psi_inverse_ln(&self, v: f64) -> f64 {
        match *self {
            DiffusionSpec::Gbm { .. } => (v / self.gbm_gamma1().unwrap()).exp(),
            DiffusionSpec::Cev { .. } => v.exp(),
            DiffusionSpec::Bessel3 { r } => {
                // ln ψ = ln k + ln(sinh(kz)/(kz)); Newton from the asymptotic guess
                let k = (2.0 * r).sqrt();
                let target = v - k.ln();
                if target <= 0.0 {
                    return f64::MIN_POSITIVE;
                }
                let mut u = if target > 2.0 { target + (2.0 * target).ln() } else { (6.0 * target).sqrt() };
                for _ in 0..100 {
                    let f = ln_sinhc(u) - target;
                    // d/du ln(sinh u / u) = coth u - 1/u
                    let slope = if u < 1e-4 { u / 3.0 } else { 1.0 / u.tanh() - 1.0 / u };
                    let next = (u - f / slope).max(0.5 * u);
                    if (next - u).abs() <= 1e-15 * u {
                        u = next;
                        break;
                    }
                    u = next;
                }
                u / k
            }
        }
    }

    fn tail_decay(&self) -> Decay {
        match *self {
            DiffusionSpec::Bessel3 { r } => Decay::Exponential {
                scale: 1.0 / (2.0 * r).sqrt(),
            },
            _ => Decay::Algebraic,
        }
    }

    fn lower_absorbing(&self) -> bool {
        // s' -> 1 at 0 while ψ_r(x) = x vanishes
        matches!(self, DiffusionSpec::Cev { .. })
    }
}

// ---------------------------------------------------------------------------
// Path simulation

/// Position of a simulated path: time, state and running maximum. For GBM
/// the running maximum includes the exact Brownian-bridge maximum between
/// grid points; the other families track the maximum over grid points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState {
    pub t: f64,
    pub x: f64,
    pub max: f64,
    // ln x for GBM, raw (possibly negative) Euler state for CEV
    aux: f64,
}

impl PathState {
    /// Restarts the running maximum at the current state.
    pub fn reset_max(&mut self) {
        self.max = self.x;
    }
}

/// A simulated trajectory on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub running_max: Vec<f64>,
}

fn std_normal<R: Rng + ?Sized>(rng: &mut R, flip: bool) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    if flip {
        -z
    } else {
        z
    }
}

// uniform on (0, 1]
fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Quantile map of the folded normal `|μ + Z|` (μ >= 0) evaluated at the
/// probability `Φ(z)`. For fixed `z` the result is nondecreasing in `μ`,
/// which is what makes the Bessel scheme order preserving.
fn folded_normal_quantile(mu: f64, z: f64) -> f64 {
    // Work with whichever tail keeps precision.
    let upper = z > 0.0;
    let target = if upper { norm_sf(z) } else { norm_cdf(z) };
    let g = |v: f64| {
        if upper {
            norm_sf(v - mu) + norm_sf(v + mu) - target
        } else {
            norm_cdf(v - mu) - norm_cdf(-v - mu) - target
        }
    };
    let (mut lo, mut hi) = (0.0, mu + z.abs() + 12.0);
    let mut v = (mu + z).max(0.5 * hi.min(1.0));
    for _ in 0..100 {
        let gv = g(v);
        let increasing_root_side = if upper { gv < 0.0 } else { gv > 0.0 };
        if increasing_root_side {
            hi = v;
        } else {
            lo = v;
        }
        let slope = norm_pdf(v - mu) + norm_pdf(v + mu);
        let newton = if upper { v + gv / slope } else { v - gv / slope };
        let next = if newton > lo && newton < hi && slope > 0.0 {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - v).abs() <= 1e-15 * v.abs().max(1e-300) || hi - lo <= 1e-15 * hi {
            return next;
        }
        v = next;
    }
    v
}

impl DiffusionSpec {
    pub fn start(&self, x0: f64) -> PathState {
        let aux = match self {
            DiffusionSpec::Gbm { .. } => x0.ln(),
            _ => x0,
        };
        PathState {
            t: 0.0,
            x: x0,
            max: x0,
            aux,
        }
    }

    /// Advances `state` by `h`. With `antithetic` all Gaussian draws are
    /// negated, giving the mirrored path of the same stream.
    pub fn advance<R: Rng + ?Sized>(&self, state: &mut PathState, h: f64, rng: &mut R, antithetic: bool) {
        match *self {
            DiffusionSpec::Gbm { mu, sigma, .. } => {
                let z = std_normal(rng, antithetic);
                let u = open_uniform(rng);
                let l0 = state.aux;
                let l1 = l0 + (mu - 0.5 * sigma * sigma) * h + sigma * h.sqrt() * z;
                // maximum of the Brownian bridge from l0 to l1 over a step h
                let d = l1 - l0;
                let bridge_max = 0.5 * (l0 + l1 + (d * d - 2.0 * sigma * sigma * h * u.ln()).sqrt());
                state.aux = l1;
                state.x = l1.exp();
                state.max = state.max.max(bridge_max.exp());
            }
            DiffusionSpec::Bessel3 { .. } => {
                let sh = h.sqrt();
                let z1 = std_normal(rng, antithetic);
                let z2 = std_normal(rng, antithetic);
                let z3 = std_normal(rng, antithetic);
                let mu = state.x / sh;
                let v = if mu > 8.5 {
                    (mu + z1).abs()
                } else {
                    folded_normal_quantile(mu, z1)
                };
                state.x = sh * (v * v + z2 * z2 + z3 * z3).sqrt();
                state.aux = state.x;
                state.max = state.max.max(state.x);
            }
            DiffusionSpec::Cev {
                r,
                sigma,
                gamma,
                vol_floor,
            } => {
                let z = std_normal(rng, antithetic);
                let x = state.aux;
                let drift = r * x.max(0.0);
                let vol = sigma * x.max(vol_floor).powf(1.0 - gamma);
                let next = x + drift * h + vol * h.sqrt() * z;
                state.aux = next;
                state.x = next.max(0.0);
                state.max = state.max.max(state.x);
            }
        }
        state.t += h;
    }

    /// Advances `state` up to time `t_end` in steps of `step`, the final one
    /// shortened to land exactly on `t_end`.
    pub fn advance_to<R: Rng + ?Sized>(
        &self,
        state: &mut PathState,
        t_end: f64,
        step: f64,
        rng: &mut R,
        antithetic: bool,
    ) {
        while state.t < t_end {
            let h = step.min(t_end - state.t);
            if h <= 1e-15 * t_end.max(1.0) {
                state.t = t_end;
                break;
            }
            self.advance(state, h, rng, antithetic);
        }
    }
}

/// Simulates one trajectory of `spec` from `x0` on the grid `0, step, ...,
/// horizon`, seeded deterministically.
pub fn simulate_path(spec: &DiffusionSpec, x0: f64, step: f64, horizon: f64, seed: u64) -> Result<PathSample> {
    spec.validate()?;
    check_state(spec, x0)?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidInput(format!("step must be positive, got {step}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
    }
    let mut rng = crate::mc::path_rng(seed, 0);
    let mut state = spec.start(x0);
    let n = (horizon / step).ceil() as usize;
    let mut sample = PathSample {
        times: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
        running_max: Vec::with_capacity(n + 1),
    };
    sample.times.push(0.0);
    sample.states.push(x0);
    sample.running_max.push(x0);
    for i in 1..=n {
        let t = (i as f64 * step).min(horizon);
        spec.advance_to(&mut state, t, step, &mut rng, false);
        sample.times.push(state.t);
        sample.states.push(state.x);
        sample.running_max.push(state.max);
    }
    Ok(sample)
}
