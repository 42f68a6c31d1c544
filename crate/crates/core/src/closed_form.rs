//! The explicit free boundaries available for GBM, three-dimensional Bessel
//! and CEV dynamics combined with Cobb-Douglas or CES profits.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::boundary::Boundary;
use crate::diffusion::{Diffusion, DiffusionSpec};
use crate::error::{Error, Result};
use crate::numerics::{log_cumulative, QuadConfig, SignedPolynomial};
use crate::profit::{Profit, ProfitSpec};

/// Relative tolerance of the quadratures behind `g`, `α_{k,n}`.
pub const CLOSED_FORM_QUAD_TOL: f64 = 1e-13;
/// Relative tolerance used when checking polynomial roots.
pub const POLY_ROOT_TOL: f64 = 1e-12;

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn ln_sinh(u: f64) -> f64 {
    if u > 20.0 {
        u - LN_2 + (-(-2.0 * u).exp()).ln_1p()
    } else {
        u.sinh().ln()
    }
}

/// GBM constants: `γ₁`, `δ = μ/σ² - 1/2` and `θ = γ₁ + 2δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmConstants {
    pub gamma1: f64,
    pub delta: f64,
    pub theta: f64,
}

impl GbmConstants {
    pub fn new(mu: f64, sigma: f64, r: f64) -> Result<Self> {
        let gamma1 = crate::diffusion::gamma1(mu, sigma, r)?;
        let delta = mu / (sigma * sigma) - 0.5;
        Ok(Self {
            gamma1,
            delta,
            theta: gamma1 + 2.0 * delta,
        })
    }
}

/// `K_δ` of the GBM / Cobb-Douglas boundary `b(x) = K_δ x^{α/(1-β)}`.
pub fn gbm_cobb_douglas_constant(mu: f64, sigma: f64, r: f64, alpha: f64, beta: f64) -> Result<f64> {
    ProfitSpec::cobb_douglas(alpha, beta)?;
    let g = GbmConstants::new(mu, sigma, r)?;
    let base = sigma * sigma * g.gamma1 * (alpha + g.theta) * (alpha + beta) / (2.0 * beta);
    Ok(base.powf(-1.0 / (1.0 - beta)))
}

/// The polynomial `(1 - r) + Σ_{i=1}^{n-1} C(n-1, i) nθ/(nθ+i) C^i`, i.e.
/// `F(-(n-1), nθ; nθ+1; -C) - r` written out term by term.
pub fn gbm_ces_polynomial(mu: f64, sigma: f64, r: f64, n: u32) -> Result<SignedPolynomial> {
    ProfitSpec::ces(n)?;
    let g = GbmConstants::new(mu, sigma, r)?;
    let nt = n as f64 * g.theta;
    let mut coefficients = vec![1.0 - r];
    coefficients.extend((1..n).map(|i| binomial(n - 1, i) * nt / (nt + i as f64)));
    Ok(SignedPolynomial::new(coefficients)?)
}

/// `C_n`, the positive root of [`gbm_ces_polynomial`].
pub fn gbm_ces_constant(mu: f64, sigma: f64, r: f64, n: u32) -> Result<f64> {
    if !(r > 1.0) {
        return Err(Error::Assumption(format!(
            "CES profits need r > 1 (the saturation level), got r = {r}"
        )));
    }
    Ok(gbm_ces_polynomial(mu, sigma, r, n)?.positive_root(POLY_ROOT_TOL)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    GbmCobbDouglas { k_delta: f64, exponent: f64 },
    BesselCobbDouglas { alpha: f64, beta: f64, k: f64 },
    CevCobbDouglas { alpha: f64, beta: f64, rate: f64, gamma: f64, sigma: f64 },
    GbmCes { c_n: f64, n: u32 },
    BesselCes { n: u32, k: f64, r: f64 },
    CevCes { n: u32, rate: f64, gamma: f64, sigma: f64, r: f64 },
}

/// One of the six explicit boundaries, with its constants precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormBoundary {
    diffusion: DiffusionSpec,
    profit: ProfitSpec,
    gbm: Option<GbmConstants>,
    kind: Kind,
}

/// Boundary values on a grid, with the CES auxiliary `f_n = b^{-1/n}` when
/// the profit is CES.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormTable {
    pub x: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<f64>>,
}

/// Checks `r > κ`, without which no boundary exists.
pub fn check_discount(diffusion: &dyn Diffusion, profit: &dyn Profit) -> Result<()> {
    let (r, kappa) = (diffusion.discount(), profit.saturation());
    if r > kappa {
        Ok(())
    } else {
        Err(Error::Assumption(format!(
            "the discount rate r = {r} must exceed the saturation level κ = {kappa}; \
             otherwise it is optimal to invest without bound immediately"
        )))
    }
}

impl ClosedFormBoundary {
    pub fn new(diffusion: DiffusionSpec, profit: ProfitSpec) -> Result<Self> {
        diffusion.validate()?;
        profit.validate()?;
        check_discount(&diffusion, &profit)?;
        let mut gbm = None;
        let kind = match (diffusion, profit) {
            (DiffusionSpec::Gbm { mu, sigma, r }, ProfitSpec::CobbDouglas { alpha, beta }) => {
                gbm = Some(GbmConstants::new(mu, sigma, r)?);
                Kind::GbmCobbDouglas {
                    k_delta: gbm_cobb_douglas_constant(mu, sigma, r, alpha, beta)?,
                    exponent: alpha / (1.0 - beta),
                }
            }
            (DiffusionSpec::Gbm { mu, sigma, r }, ProfitSpec::Ces { n }) => {
                gbm = Some(GbmConstants::new(mu, sigma, r)?);
                Kind::GbmCes {
                    c_n: gbm_ces_constant(mu, sigma, r, n)?,
                    n,
                }
            }
            (DiffusionSpec::Bessel3 { r }, ProfitSpec::CobbDouglas { alpha, beta }) => Kind::BesselCobbDouglas {
                alpha,
                beta,
                k: (2.0 * r).sqrt(),
            },
            (DiffusionSpec::Bessel3 { r }, ProfitSpec::Ces { n }) => Kind::BesselCes {
                n,
                k: (2.0 * r).sqrt(),
                r,
            },
            (DiffusionSpec::Cev { r, sigma, gamma, .. }, ProfitSpec::CobbDouglas { alpha, beta }) => {
                Kind::CevCobbDouglas {
                    alpha,
                    beta,
                    rate: r / (gamma * sigma * sigma),
                    gamma,
                    sigma,
                }
            }
            (DiffusionSpec::Cev { r, sigma, gamma, .. }, ProfitSpec::Ces { n }) => Kind::CevCes {
                n,
                rate: r / (gamma * sigma * sigma),
                gamma,
                sigma,
                r,
            },
        };
        Ok(Self {
            diffusion,
            profit,
            gbm,
            kind,
        })
    }

    pub fn diffusion(&self) -> &DiffusionSpec {
        &self.diffusion
    }

    pub fn profit(&self) -> &ProfitSpec {
        &self.profit
    }

    pub fn gbm_constants(&self) -> Option<GbmConstants> {
        self.gbm
    }

    /// `K_δ` for GBM / Cobb-Douglas.
    pub fn k_delta(&self) -> Option<f64> {
        match self.kind {
            Kind::GbmCobbDouglas { k_delta, .. } => Some(k_delta),
            _ => None,
        }
    }

    /// `C_n` for GBM / CES.
    pub fn c_n(&self) -> Option<f64> {
        match self.kind {
            Kind::GbmCes { c_n, .. } => Some(c_n),
            _ => None,
        }
    }

    /// `b(x)` at a single state.
    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(self.table(&[x])?.b[0])
    }

    /// `b` on an increasing grid. The integrals `g` and `α_{k,n}` are
    /// accumulated panel by panel along the grid.
    pub fn eval_grid(&self, grid: &[f64]) -> Result<Vec<f64>> {
        Ok(self.table(grid)?.b)
    }

    /// The CES auxiliary `f_n(x)`; `None` for Cobb-Douglas profits.
    pub fn auxiliary(&self, grid: &[f64]) -> Result<Option<Vec<f64>>> {
        Ok(self.table(grid)?.f)
    }

    pub fn table(&self, grid: &[f64]) -> Result<ClosedFormTable> {
        if let Some(&x) = grid.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(Error::Domain {
                x,
                lower: 0.0,
                upper: f64::INFINITY,
            });
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("grid must be strictly increasing".into()));
        }
        let cfg = QuadConfig::relative(CLOSED_FORM_QUAD_TOL);
        let (b, f) = match self.kind {
            Kind::GbmCobbDouglas { k_delta, exponent } => {
                (grid.iter().map(|x| k_delta * x.powf(exponent)).collect(), None)
            }
            Kind::GbmCes { c_n, n } => {
                let scale = c_n.powi(-(n as i32));
                let b = grid.iter().map(|x| scale * x).collect();
                let f = grid.iter().map(|x| c_n * x.powf(-1.0 / n as f64)).collect();
                (b, Some(f))
            }
            Kind::BesselCobbDouglas { alpha, beta, k } => {
                // g(x) = ∫_0^x y^{α+1} sinh(ky) dy
                let ln_g = log_cumulative(|y: f64| (alpha + 1.0) * y.ln() + ln_sinh(k * y), 0.0, grid, &cfg)?;
                let lead = ((alpha + beta) / (2.0 * beta)).ln();
                let b = grid
                    .iter()
                    .zip(&ln_g)
                    .map(|(&x, g)| {
                        let ln_ratio = lead + 2.0 * x.ln() + self.diffusion.ln_psi_prime(x) - g.ln_value;
                        (-ln_ratio / (1.0 - beta)).exp()
                    })
                    .collect();
                (b, None)
            }
            Kind::CevCobbDouglas {
                alpha,
                beta,
                rate,
                gamma,
                sigma,
            } => {
                // g(x) = ∫_0^x y^{2γ+α-1} e^{rate·y^{2γ}} dy
                let ln_g = log_cumulative(
                    |y: f64| (2.0 * gamma + alpha - 1.0) * y.ln() + rate * y.powf(2.0 * gamma),
                    0.0,
                    grid,
                    &cfg,
                )?;
                let lead = (2.0 * beta / (sigma * sigma * (alpha + beta))).ln();
                let b = grid
                    .iter()
                    .zip(&ln_g)
                    .map(|(&x, g)| ((lead + g.ln_value - rate * x.powf(2.0 * gamma)) / (1.0 - beta)).exp())
                    .collect();
                (b, None)
            }
            Kind::BesselCes { n, k, r } => {
                // α_{k,n}(x) = ∫_0^x y^{1+k/n} sinh(√(2r) y) dy
                let alphas = (0..n)
                    .map(|j| {
                        let p = 1.0 + j as f64 / n as f64;
                        log_cumulative(|y: f64| p * y.ln() + ln_sinh(k * y), 0.0, grid, &cfg)
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                self.ces_roots(grid.len(), n, &alphas, |i, shift| {
                    (r - 1.0) * (alphas[0][i].ln_value - shift).exp()
                })?
            }
            Kind::CevCes {
                n,
                rate,
                gamma,
                sigma,
                r,
            } => {
                // α_{k,n}(x) = ∫_0^x y^{2γ+k/n-1} e^{rate·y^{2γ}} dy
                let alphas = (0..n)
                    .map(|j| {
                        let p = 2.0 * gamma + j as f64 / n as f64 - 1.0;
                        log_cumulative(|y: f64| p * y.ln() + rate * y.powf(2.0 * gamma), 0.0, grid, &cfg)
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                self.ces_roots(grid.len(), n, &alphas, |i, shift| {
                    0.5 * sigma * sigma * (-shift).exp() + (r - 1.0) * (alphas[0][i].ln_value - shift).exp()
                })?
            }
        };
        Ok(ClosedFormTable {
            x: grid.to_vec(),
            b,
            f,
        })
    }

    // Solves Σ_{k>=1} C(n-1,k) α_k f^k = rhs at every grid point, with all
    // terms divided by exp(shift) to keep them finite.
    fn ces_roots<R>(
        &self,
        len: usize,
        n: u32,
        alphas: &[Vec<crate::numerics::LogIntegral>],
        rhs: R,
    ) -> Result<(Vec<f64>, Option<Vec<f64>>)>
    where
        R: Fn(usize, f64) -> f64,
    {
        let mut b = Vec::with_capacity(len);
        let mut f = Vec::with_capacity(len);
        for i in 0..len {
            let shift = alphas.iter().map(|a| a[i].ln_value).fold(f64::NEG_INFINITY, f64::max);
            let mut coefficients = vec![-rhs(i, shift)];
            coefficients.extend((1..n).map(|k| binomial(n - 1, k) * (alphas[k as usize][i].ln_value - shift).exp()));
            let root = SignedPolynomial::new(coefficients)?.positive_root(POLY_ROOT_TOL)?;
            f.push(root);
            b.push(root.powi(-(n as i32)));
        }
        Ok((b, Some(f)))
    }
}

impl Boundary for ClosedFormBoundary {
    fn value(&self, x: f64) -> Result<f64> {
        self.eval(x)
    }

    fn values(&self, grid: &[f64]) -> Result<Vec<f64>> {
        self.eval_grid(grid)
    }
}

/// `b(x)` for GBM dynamics and Cobb-Douglas profit.
pub fn gbm_cobb_douglas(x: f64, mu: f64, sigma: f64, r: f64, alpha: f64, beta: f64) -> Result<f64> {
    ClosedFormBoundary::new(DiffusionSpec::gbm(mu, sigma, r)?, ProfitSpec::cobb_douglas(alpha, beta)?)?.eval(x)
}

/// `b(x)` for Bessel(3) dynamics and Cobb-Douglas profit.
pub fn bessel_cobb_douglas(x: f64, r: f64, alpha: f64, beta: f64) -> Result<f64> {
    ClosedFormBoundary::new(DiffusionSpec::bessel3(r)?, ProfitSpec::cobb_douglas(alpha, beta)?)?.eval(x)
}

/// `b(x)` for CEV dynamics and Cobb-Douglas profit.
pub fn cev_cobb_douglas(x: f64, r: f64, sigma: f64, gamma: f64, alpha: f64, beta: f64) -> Result<f64> {
    ClosedFormBoundary::new(DiffusionSpec::cev(r, sigma, gamma)?, ProfitSpec::cobb_douglas(alpha, beta)?)?.eval(x)
}

/// `b_n(x)` for GBM dynamics and CES profit.
pub fn gbm_ces(x: f64, mu: f64, sigma: f64, r: f64, n: u32) -> Result<f64> {
    ClosedFormBoundary::new(DiffusionSpec::gbm(mu, sigma, r)?, ProfitSpec::ces(n)?)?.eval(x)
}

/// `b_n(x)` for Bessel(3) dynamics and CES profit.
pub fn bessel_ces(x: f64, r: f64, n: u32) -> Result<f64> {
    ClosedFormBoundary::new(DiffusionSpec::bessel3(r)?, ProfitSpec::ces(n)?)?.eval(x)
}

/// `b_n(x)` for CEV dynamics and CES profit.
pub fn cev_ces(x: f64, r: f64, sigma: f64, gamma: f64, n: u32) -> Result<f64> {
    ClosedFormBoundary::new(DiffusionSpec::cev(r, sigma, gamma)?, ProfitSpec::ces(n)?)?.eval(x)
}
