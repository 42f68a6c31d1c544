use serde::{Deserialize, Serialize};

use super::quad::{quad_from_lower, quad_with, QuadConfig, QuadResult};
use super::NumericsError;

/// `ln ∫ w` together with the relative error bound of the integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogIntegral {
    pub ln_value: f64,
    pub rel_error: f64,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

// ∫_left^x g, where g = exp(ln_w - ln_w(x)). When ln_w rises steeply into
// x the mass sits in a layer of width 1/slope at the right end, far too thin
// for the first Kronrod nodes, so the interval is cut at x - 2^k/slope.
fn graded_panel<G, W>(
    g: &G,
    ln_w: &W,
    reference: f64,
    lower: f64,
    left: f64,
    x: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult, NumericsError>
where
    G: Fn(f64) -> f64,
    W: Fn(f64) -> f64,
{
    let width = x - left;
    let h = 1e-6 * width;
    let slope = (reference - ln_w(x - h)) / h;
    let mut cuts = vec![x];
    if slope.is_finite() && slope * width > 50.0 {
        let mut w = 1.0 / slope;
        while w < 0.5 * width {
            cuts.push(x - w);
            w *= 2.0;
        }
    }
    cuts.push(left);
    let mut total = QuadResult {
        value: 0.0,
        abs_error: 0.0,
        evaluations: 0,
    };
    for pair in cuts.windows(2) {
        let (b, a) = (pair[0], pair[1]);
        let piece = if a == lower {
            quad_from_lower(g, lower, b, cfg)?
        } else {
            quad_with(g, a, b, cfg)?
        };
        total.value += piece.value;
        total.abs_error += piece.abs_error;
        total.evaluations += piece.evaluations;
    }
    Ok(total)
}

/// `ln ∫_lower^{x_i} exp(ln_w(y)) dy` for every point of the increasing
/// `grid`. Each panel is integrated after dividing by `exp(ln_w(x_{i+1}))`,
/// so integrands growing like `e^{ky}` or `e^{c y^p}` never overflow, and the
/// integral to `x_{i+1}` extends the one to `x_i`.
pub fn log_cumulative<W: Fn(f64) -> f64>(
    ln_w: W,
    lower: f64,
    grid: &[f64],
    cfg: &QuadConfig,
) -> Result<Vec<LogIntegral>, NumericsError> {
    let mut out = Vec::with_capacity(grid.len());
    let mut ln_acc = f64::NEG_INFINITY;
    let mut abs_err_scaled = 0.0; // error of the running integral, divided by exp(ln_acc)
    let mut left = lower;
    for &x in grid {
        if !(x >= left) || !x.is_finite() {
            return Err(NumericsError::InvalidInput(format!(
                "grid must be finite, increasing and above the lower limit; got {x} after {left}"
            )));
        }
        let reference = ln_w(x);
        if !reference.is_finite() {
            return Err(NumericsError::NonFinite { at: x });
        }
        let g = |y: f64| (ln_w(y) - reference).exp();
        // ln_w itself carries rounding of order ε|ln_w|, which caps the
        // attainable relative accuracy of the exponentiated integrand.
        let floor = 50.0 * f64::EPSILON * reference.abs();
        let panel_cfg = QuadConfig {
            rel_tol: cfg.rel_tol.max(floor),
            ..*cfg
        };
        let panel = graded_panel(&g, &ln_w, reference, lower, left, x, &panel_cfg)?;
        let ln_panel = if panel.value > 0.0 {
            reference + panel.value.ln()
        } else {
            f64::NEG_INFINITY
        };
        let ln_new = log_add_exp(ln_acc, ln_panel);
        if !ln_new.is_finite() {
            return Err(NumericsError::NonFinite { at: x });
        }
        let prev_part = if ln_acc.is_finite() {
            abs_err_scaled * (ln_acc - ln_new).exp()
        } else {
            0.0
        };
        abs_err_scaled = prev_part + panel.abs_error * (reference - ln_new).exp();
        ln_acc = ln_new;
        out.push(LogIntegral {
            ln_value: ln_acc,
            rel_error: abs_err_scaled,
        });
        left = x;
    }
    Ok(out)
}
