//! Operating profit functions `π(x, c)` of state `x` and capacity `c`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{bisect_monotone, DEFAULT_ROOT_TOL};

/// One term `coef · x^x_power · c^c_power` of a marginal profit written as a
/// finite sum of powers. The solver uses this to cache inner integrals that
/// do not depend on the capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub coef: f64,
    pub x_power: f64,
    pub c_power: f64,
}

/// Operating profit with strictly decreasing marginal `π_c(x, ·)` tending to
/// `+∞` at zero capacity and to [`Profit::saturation`] at infinity.
pub trait Profit: Send + Sync + fmt::Debug {
    fn profit(&self, x: f64, c: f64) -> f64;
    fn marginal(&self, x: f64, c: f64) -> f64;
    /// `κ = lim_{c→∞} π_c(x, c)`.
    fn saturation(&self) -> f64;

    /// The capacity at which `π_c(x, ·)` equals `v > κ`.
    fn inverse_marginal(&self, x: f64, v: f64) -> Result<f64> {
        bisect_inverse(self, x, v)
    }

    /// Expansion of `π_c` into powers, when one exists.
    fn power_terms(&self) -> Option<Vec<PowerTerm>> {
        None
    }
}

/// Inverts `π_c(x, ·)` numerically by bracketed bisection in `c`.
pub fn bisect_inverse<P: Profit + ?Sized>(p: &P, x: f64, v: f64) -> Result<f64> {
    if !(v > p.saturation()) || !v.is_finite() {
        return Err(Error::InvalidInput(format!(
            "marginal value {v} must exceed the saturation level {}",
            p.saturation()
        )));
    }
    Ok(bisect_monotone(|c| p.marginal(x, c) - v, 1.0, DEFAULT_ROOT_TOL * 1e-2)?)
}

/// Built-in profit families: `{"kind":"cobb_douglas","alpha":0.5,"beta":0.5}`
/// or `{"kind":"ces","n":2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfitSpec {
    /// `π(x, c) = x^α c^β / (α + β)`.
    CobbDouglas { alpha: f64, beta: f64 },
    /// `π(x, c) = (x^{1/n} + c^{1/n})^n`.
    Ces { n: u32 },
}

impl ProfitSpec {
    pub fn cobb_douglas(alpha: f64, beta: f64) -> Result<Self> {
        let p = ProfitSpec::CobbDouglas { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn ces(n: u32) -> Result<Self> {
        let p = ProfitSpec::Ces { n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ProfitSpec::CobbDouglas { alpha, beta } => {
                for (name, v) in [("alpha", alpha), ("beta", beta)] {
                    if !(v > 0.0 && v < 1.0) {
                        return Err(Error::InvalidInput(format!("{name} must lie in (0, 1), got {v}")));
                    }
                }
            }
            ProfitSpec::Ces { n } => {
                if n < 2 {
                    return Err(Error::InvalidInput(format!("CES order n must be at least 2, got {n}")));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProfitSpec::CobbDouglas { .. } => "cobb_douglas",
            ProfitSpec::Ces { .. } => "ces",
        }
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl Profit for ProfitSpec {
    fn profit(&self, x: f64, c: f64) -> f64 {
        match *self {
            ProfitSpec::CobbDouglas { alpha, beta } => x.powf(alpha) * c.powf(beta) / (alpha + beta),
            ProfitSpec::Ces { n } => {
                let inv = 1.0 / n as f64;
                (x.powf(inv) + c.powf(inv)).powi(n as i32)
            }
        }
    }

    fn marginal(&self, x: f64, c: f64) -> f64 {
        match *self {
            ProfitSpec::CobbDouglas { alpha, beta } => {
                beta / (alpha + beta) * x.powf(alpha) * c.powf(beta - 1.0)
            }
            ProfitSpec::Ces { n } => (1.0 + (x / c).powf(1.0 / n as f64)).powi(n as i32 - 1),
        }
    }

    fn saturation(&self) -> f64 {
        match self {
            ProfitSpec::CobbDouglas { .. } => 0.0,
            ProfitSpec::Ces { .. } => 1.0,
        }
    }

    fn inverse_marginal(&self, x: f64, v: f64) -> Result<f64> {
        if !(v > self.saturation()) || !v.is_finite() {
            return Err(Error::InvalidInput(format!(
                "marginal value {v} must exceed the saturation level {}",
                self.saturation()
            )));
        }
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "state must be positive for inversion, got {x}"
            )));
        }
        match *self {
            ProfitSpec::CobbDouglas { alpha, beta } => {
                Ok((v * (alpha + beta) / (beta * x.powf(alpha))).powf(1.0 / (beta - 1.0)))
            }
            ProfitSpec::Ces { n } => {
                let w = (v.ln() / (n - 1) as f64).exp_m1();
                Ok(x * w.powi(-(n as i32)))
            }
        }
    }

    fn power_terms(&self) -> Option<Vec<PowerTerm>> {
        Some(match *self {
            ProfitSpec::CobbDouglas { alpha, beta } => vec![PowerTerm {
                coef: beta / (alpha + beta),
                x_power: alpha,
                c_power: beta - 1.0,
            }],
            ProfitSpec::Ces { n } => (0..n)
                .map(|k| {
                    let p = k as f64 / n as f64;
                    PowerTerm {
                        coef: binomial(n - 1, k),
                        x_power: p,
                        c_power: -p,
                    }
                })
                .collect(),
        })
    }
}

fn check_capacity(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("capacity must be positive and finite, got {c}")))
    }
}

fn check_state(x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("state must be nonnegative and finite, got {x}")))
    }
}

/// `π(x, c)` with validated arguments.
pub fn profit(p: &dyn Profit, x: f64, c: f64) -> Result<f64> {
    check_state(x)?;
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidInput(format!("capacity must be nonnegative, got {c}")));
    }
    Ok(p.profit(x, c))
}

/// `π_c(x, c)` with validated arguments.
pub fn marginal_profit(p: &dyn Profit, x: f64, c: f64) -> Result<f64> {
    check_state(x)?;
    check_capacity(c)?;
    Ok(p.marginal(x, c))
}

/// The capacity `c` with `π_c(x, c) = v`.
pub fn inverse_marginal(p: &dyn Profit, x: f64, v: f64) -> Result<f64> {
    check_state(x)?;
    p.inverse_marginal(x, v)
}

pub fn saturation(p: &dyn Profit) -> f64 {
    p.saturation()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn families() -> Vec<ProfitSpec> {
        vec![
            ProfitSpec::cobb_douglas(0.5, 0.5).unwrap(),
            ProfitSpec::cobb_douglas(0.3, 0.6).unwrap(),
            ProfitSpec::ces(2).unwrap(),
            ProfitSpec::ces(3).unwrap(),
            ProfitSpec::ces(7).unwrap(),
        ]
    }

    #[test]
    fn marginal_examples() {
        for n in 2..8 {
            let ces = ProfitSpec::ces(n).unwrap();
            assert_eq!(marginal_profit(&ces, 0.0, 1.0).unwrap(), 1.0);
        }
        assert_eq!(marginal_profit(&ProfitSpec::ces(2).unwrap(), 3.0, 3.0).unwrap(), 2.0);
        let cd = ProfitSpec::cobb_douglas(0.5, 0.5).unwrap();
        assert_relative_eq!(marginal_profit(&cd, 1.0, 1.0).unwrap(), 0.5, max_relative = 1e-15);
        assert_eq!(marginal_profit(&cd, 0.0, 2.0).unwrap(), 0.0);
        assert!(marginal_profit(&cd, 1.0, 0.0).is_err());
        assert!(marginal_profit(&cd, 1.0, -1.0).is_err());
    }

    #[test]
    fn inverse_examples() {
        let cd = ProfitSpec::cobb_douglas(0.5, 0.5).unwrap();
        assert_relative_eq!(inverse_marginal(&cd, 1.0, 0.5).unwrap(), 1.0, max_relative = 1e-14);
        let ces = ProfitSpec::ces(2).unwrap();
        assert_relative_eq!(inverse_marginal(&ces, 1.0, 2.0).unwrap(), 1.0, max_relative = 1e-14);
        assert!(inverse_marginal(&ces, 1.0, 1.0).is_err());
        assert!(inverse_marginal(&cd, 1.0, 0.0).is_err());
        assert!(inverse_marginal(&cd, 1.0, -2.0).is_err());
    }

    #[test]
    fn saturation_levels() {
        assert_eq!(saturation(&ProfitSpec::cobb_douglas(0.3, 0.6).unwrap()), 0.0);
        assert_eq!(saturation(&ProfitSpec::ces(3).unwrap()), 1.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ProfitSpec::cobb_douglas(0.0, 0.5).is_err());
        assert!(ProfitSpec::cobb_douglas(0.5, 1.0).is_err());
        assert!(ProfitSpec::ces(1).is_err());
    }

    #[test]
    fn ces_binomial_identity() {
        for p in families() {
            let terms = p.power_terms().unwrap();
            for (x, c) in [(0.1, 3.0), (1.0, 1.0), (7.0, 0.2), (40.0, 15.0)] {
                let sum: f64 = terms
                    .iter()
                    .map(|t| t.coef * f64::powf(x, t.x_power) * f64::powf(c, t.c_power))
                    .sum();
                assert_relative_eq!(sum, p.marginal(x, c), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn marginal_matches_finite_differences() {
        for p in families() {
            for (x, c) in [(0.5, 0.7), (2.0, 3.0), (10.0, 0.4)] {
                let mut prev = f64::INFINITY;
                for h in [1e-2, 5e-3, 2.5e-3] {
                    let fd = (p.profit(x, c + h) - p.profit(x, c - h)) / (2.0 * h);
                    let err = (fd - p.marginal(x, c)).abs();
                    // second order: halving the step quarters the error
                    assert!(err < prev / 3.0 || err < 1e-10, "{p:?}");
                    prev = err;
                }
            }
        }
    }

    #[test]
    fn concavity_and_supermodularity() {
        for p in families() {
            let grid: Vec<f64> = (0..40).map(|i| 1e-3 * 1.4f64.powi(i)).collect();
            for &x in &grid {
                for w in grid.windows(2) {
                    assert!(p.marginal(x, w[0]) > p.marginal(x, w[1]), "{p:?}");
                    assert!(p.marginal(w[0], x) <= p.marginal(w[1], x), "{p:?}");
                }
            }
        }
    }

    #[test]
    fn inada_limits() {
        for p in families() {
            for x in [0.1, 1.0, 10.0] {
                let reference = p.saturation().max(p.marginal(x, 1.0));
                let mut prev = reference;
                for c in [1e-8, 1e-16, 1e-32] {
                    assert!(p.marginal(x, c) > prev, "{p:?}");
                    prev = p.marginal(x, c);
                }
                assert!(prev > 1e6 * reference, "{p:?}");
                assert!((p.marginal(x, 1e64 * x) - p.saturation()).abs() < 1e-6, "{p:?}");
            }
        }
    }

    #[test]
    fn json_shapes() {
        let cd: ProfitSpec = serde_json::from_str(r#"{"kind":"cobb_douglas","alpha":0.5,"beta":0.5}"#).unwrap();
        assert_eq!(cd, ProfitSpec::cobb_douglas(0.5, 0.5).unwrap());
        let ces: ProfitSpec = serde_json::from_str(r#"{"kind":"ces","n":2}"#).unwrap();
        assert_eq!(ces, ProfitSpec::ces(2).unwrap());
        assert_eq!(serde_json::to_string(&ces).unwrap(), r#"{"kind":"ces","n":2}"#);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn inverse_round_trip(idx in 0usize..5, x in 1e-2f64..1e2, excess in 1e-3f64..50.0) {
            let p = families()[idx];
            let v = p.saturation() + excess;
            let c = inverse_marginal(&p, x, v).unwrap();
            prop_assert!((p.marginal(x, c) - v).abs() <= 1e-12 * (1.0 + v));
            let by_bisection = bisect_inverse(&p, x, v).unwrap();
            prop_assert!((by_bisection / c - 1.0).abs() < 1e-10);
        }
    }
}
