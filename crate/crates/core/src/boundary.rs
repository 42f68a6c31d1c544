//! Boundary curves `x ↦ b(x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack allowed when checking that a boundary is nondecreasing.
pub const MONOTONE_SLACK: f64 = 1e-9;

/// A free boundary that can be evaluated at any state.
pub trait Boundary: Send + Sync {
    fn value(&self, x: f64) -> Result<f64>;

    /// Values on an increasing grid. Implementations that can share work
    /// across points override this.
    fn values(&self, grid: &[f64]) -> Result<Vec<f64>> {
        grid.iter().map(|&x| self.value(x)).collect()
    }
}

impl<B: Boundary + ?Sized> Boundary for &B {
    fn value(&self, x: f64) -> Result<f64> {
        (**self).value(x)
    }

    fn values(&self, grid: &[f64]) -> Result<Vec<f64>> {
        (**self).values(grid)
    }
}

/// `factor · b(x)`.
#[derive(Debug, Clone)]
pub struct Scaled<B> {
    pub inner: B,
    pub factor: f64,
}

impl<B: Boundary> Scaled<B> {
    pub fn new(inner: B, factor: f64) -> Self {
        Self { inner, factor }
    }
}

impl<B: Boundary> Boundary for Scaled<B> {
    fn value(&self, x: f64) -> Result<f64> {
        Ok(self.factor * self.inner.value(x)?)
    }

    fn values(&self, grid: &[f64]) -> Result<Vec<f64>> {
        Ok(self.inner.values(grid)?.into_iter().map(|v| self.factor * v).collect())
    }
}

/// A boundary constant in `x`; `0` means "never invest".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl Boundary for Constant {
    fn value(&self, _x: f64) -> Result<f64> {
        Ok(self.0)
    }
}

/// A positive nondecreasing boundary sampled on a grid, interpolated linearly
/// in `(ln x, ln b)` and extrapolated with the slope of the end segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCurve", into = "RawCurve")]
pub struct BoundaryCurve {
    grid: Vec<f64>,
    values: Vec<f64>,
    ln_grid: Vec<f64>,
    ln_values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawCurve {
    x: Vec<f64>,
    b: Vec<f64>,
}

impl TryFrom<RawCurve> for BoundaryCurve {
    type Error = Error;

    fn try_from(raw: RawCurve) -> Result<Self> {
        BoundaryCurve::new(raw.x, raw.b)
    }
}

impl From<BoundaryCurve> for RawCurve {
    fn from(c: BoundaryCurve) -> Self {
        RawCurve {
            x: c.grid,
            b: c.values,
        }
    }
}

/// Indices `i` with `values[i+1] < values[i]` beyond the relative slack.
pub fn monotonicity_violations(values: &[f64], slack: f64) -> Vec<usize> {
    values
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] < w[0] * (1.0 - slack))
        .map(|(i, _)| i)
        .collect()
}

impl BoundaryCurve {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "grid has {} points but {} values were given",
                grid.len(),
                values.len()
            )));
        }
        if grid.len() < 2 {
            return Err(Error::InvalidInput("a boundary curve needs at least two points".into()));
        }
        if let Some(i) = grid.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput(format!(
                "grid must be strictly increasing (indices {i} and {})",
                i + 1
            )));
        }
        if let Some(i) = grid.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidInput(format!("grid point {i} is not a positive state")));
        }
        if let Some(i) = values.iter().position(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(Error::Boundary(format!(
                "boundary value {} at index {i} is not strictly positive",
                values[i]
            )));
        }
        let bad = monotonicity_violations(&values, MONOTONE_SLACK);
        if !bad.is_empty() {
            let shown: Vec<String> = bad.iter().take(10).map(|i| format!("{i}->{}", i + 1)).collect();
            return Err(Error::Boundary(format!(
                "boundary decreases between indices {}{}",
                shown.join(", "),
                if bad.len() > 10 { ", ..." } else { "" }
            )));
        }
        let ln_grid = grid.iter().map(|x| x.ln()).collect();
        let ln_values = values.iter().map(|b| b.ln()).collect();
        Ok(Self {
            grid,
            values,
            ln_grid,
            ln_values,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|v| v * factor).collect())
    }

    /// Interpolated value; never fails for `x > 0`.
    pub fn eval(&self, x: f64) -> f64 {
        let lx = x.ln();
        let n = self.grid.len();
        let i = self.ln_grid.partition_point(|g| *g <= lx).clamp(1, n - 1) - 1;
        let (x0, x1) = (self.ln_grid[i], self.ln_grid[i + 1]);
        let (b0, b1) = (self.ln_values[i], self.ln_values[i + 1]);
        // clamp keeps extrapolation nondecreasing when the slack let a tiny dip through
        let slope = ((b1 - b0) / (x1 - x0)).max(0.0);
        (b0 + slope * (lx - x0)).exp()
    }
}

impl Boundary for BoundaryCurve {
    fn value(&self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::Domain {
                x,
                lower: 0.0,
                upper: f64::INFINITY,
            });
        }
        Ok(self.eval(x))
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || n < 2 {
        return Err(Error::InvalidInput(format!(
            "log grid needs 0 < lo < hi and at least two points, got [{lo}, {hi}] with {n}"
        )));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut grid: Vec<f64> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect();
    grid[0] = lo;
    grid[n - 1] = hi;
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn power_law_is_reproduced_exactly() {
        let grid = log_grid(1e-2, 1e2, 9).unwrap();
        let values: Vec<f64> = grid.iter().map(|x| 0.3 * x.powf(1.7)).collect();
        let curve = BoundaryCurve::new(grid, values).unwrap();
        for x in [1e-3, 0.05, 1.3, 77.0, 1e4] {
            assert_relative_eq!(curve.eval(x), 0.3 * f64::powf(x, 1.7), max_relative = 1e-12);
        }
    }

    #[test]
    fn rejects_invalid_curves() {
        assert!(BoundaryCurve::new(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(BoundaryCurve::new(vec![1.0], vec![1.0]).is_err());
        assert!(BoundaryCurve::new(vec![2.0, 1.0], vec![1.0, 2.0]).is_err());
        assert!(BoundaryCurve::new(vec![1.0, 2.0], vec![0.0, 2.0]).is_err());
        let err = BoundaryCurve::new(vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 1.5, 3.0]).unwrap_err();
        assert!(err.to_string().contains("1->2"), "{err}");
        // within slack
        assert!(BoundaryCurve::new(vec![1.0, 2.0], vec![1.0, 1.0 - 1e-12]).is_ok());
    }

    #[test]
    fn interpolation_is_monotone() {
        let grid = vec![0.1, 0.5, 1.0, 4.0, 9.0];
        let values = vec![0.2, 0.2, 0.7, 3.0, 3.1];
        let curve = BoundaryCurve::new(grid, values).unwrap();
        let mut prev = 0.0;
        for i in 0..400 {
            let v = curve.eval(0.05 * 1.02f64.powi(i));
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn json_round_trip() {
        let curve = BoundaryCurve::new(vec![1.0, 2.0], vec![0.5, 0.75]).unwrap();
        let text = serde_json::to_string(&curve).unwrap();
        assert_eq!(text, r#"{"x":[1.0,2.0],"b":[0.5,0.75]}"#);
        let back: BoundaryCurve = serde_json::from_str(&text).unwrap();
        assert_eq!(back, curve);
        assert!(serde_json::from_str::<BoundaryCurve>(r#"{"x":[1.0,2.0],"b":[0.5,-1.0]}"#).is_err());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-2, 1e2, 200).unwrap();
        assert_eq!(g.len(), 200);
        assert_eq!(g[0], 1e-2);
        assert_eq!(g[199], 1e2);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(log_grid(0.0, 1.0, 5).is_err());
    }
}
