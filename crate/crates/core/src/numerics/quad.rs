use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{NumericsError, DEFAULT_QUAD_TOL};

// 21-point Kronrod abscissae on [-1, 1] (non-negative half, descending) and
// the weights of the embedded 10-point Gauss rule at the odd-indexed nodes.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Outcome of a quadrature: the estimate, a conservative absolute error
/// bound and the number of integrand evaluations spent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

/// Stopping rule for the adaptive integrators. Convergence is declared when
/// the error estimate drops below `max(abs_tol, rel_tol * |value|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            abs_tol: DEFAULT_QUAD_TOL,
            rel_tol: 0.0,
            max_subdivisions: 4000,
        }
    }
}

impl QuadConfig {
    pub fn absolute(tol: f64) -> Self {
        Self {
            abs_tol: tol,
            ..Self::default()
        }
    }

    pub fn relative(tol: f64) -> Self {
        Self {
            abs_tol: 0.0,
            rel_tol: tol,
            ..Self::default()
        }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// How an integrand on `[a, ∞)` falls off; selects the change of variables
/// used by [`quad_to_infinity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decay {
    /// Power-law tail `z^-q`, `q > 1`. Integrated after `z = a + s(e^t - 1)`,
    /// which turns the tail into an exponential one.
    Algebraic,
    /// Tail of the form `exp(-z / scale)`; integrated in panels of growing
    /// width starting at `scale`.
    Exponential { scale: f64 },
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64), NumericsError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    let mut res_gauss = 0.0;
    let mut res_kronrod = f_center * WGK[10];
    let mut res_abs = res_kronrod.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];

    for j in 0..5 {
        let jtw = 2 * j + 1;
        let dx = half * XGK[jtw];
        let (f1, f2) = (f(center - dx), f(center + dx));
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        res_gauss += WG[j] * (f1 + f2);
        res_kronrod += WGK[jtw] * (f1 + f2);
        res_abs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    for j in 0..5 {
        let jtwm1 = 2 * j;
        let dx = half * XGK[jtwm1];
        let (f1, f2) = (f(center - dx), f(center + dx));
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        res_kronrod += WGK[jtwm1] * (f1 + f2);
        res_abs += WGK[jtwm1] * (f1.abs() + f2.abs());
    }

    let mean = 0.5 * res_kronrod;
    let mut res_asc = WGK[10] * (f_center - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }

    let value = res_kronrod * half;
    if !value.is_finite() {
        return Err(NumericsError::NonFinite { at: center });
    }
    let err = rescale_error(
        (res_kronrod - res_gauss) * half,
        res_abs * half.abs(),
        res_asc * half.abs(),
    );
    Ok((value, err))
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Adaptive 21-point Gauss–Kronrod quadrature of `f` over `[a, b]` to an
/// absolute tolerance.
pub fn quad<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<QuadResult, NumericsError> {
    quad_with(f, a, b, &QuadConfig::absolute(tol))
}

/// Adaptive Gauss–Kronrod quadrature on a finite interval. The segment with
/// the largest error estimate is bisected until the global estimate meets
/// `cfg`. Integrable endpoint singularities are tolerated since the rule
/// never samples the endpoints.
pub fn quad_with<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult, NumericsError> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(NumericsError::InvalidInput(format!(
            "finite limits required, got [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
        });
    }
    if a > b {
        return quad_with(f, b, a, cfg).map(|r| QuadResult {
            value: -r.value,
            ..r
        });
    }

    let (value, err) = gk21(&f, a, b)?;
    let mut evaluations = 21;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, err });
    let mut frozen: Vec<Segment> = Vec::new();
    let mut total = value;
    let mut total_err = err;
    let mut iterations = 0usize;

    loop {
        if total_err <= cfg.target(total) {
            return Ok(QuadResult {
                value: total,
                abs_error: total_err,
                evaluations,
            });
        }
        let partial = QuadResult {
            value: total,
            abs_error: total_err,
            evaluations,
        };
        if heap.len() + frozen.len() >= cfg.max_subdivisions {
            return Err(NumericsError::QuadNonConvergence { partial });
        }
        let Some(worst) = heap.pop() else {
            return Err(NumericsError::QuadNonConvergence { partial });
        };
        let mid = 0.5 * (worst.a + worst.b);
        let width = worst.b - worst.a;
        if mid <= worst.a
            || mid >= worst.b
            || width <= 1e3 * f64::EPSILON * worst.a.abs().max(worst.b.abs())
        {
            frozen.push(worst);
            continue;
        }

        let (v1, e1) = gk21(&f, worst.a, mid)?;
        let (v2, e2) = gk21(&f, mid, worst.b)?;
        evaluations += 42;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            err: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            err: e2,
        });

        iterations += 1;
        if iterations % 64 == 0 {
            total = heap.iter().chain(frozen.iter()).map(|s| s.value).sum();
            total_err = heap.iter().chain(frozen.iter()).map(|s| s.err).sum();
        } else {
            total += v1 + v2 - worst.value;
            total_err += e1 + e2 - worst.err;
        }
    }
}

/// Integrates `g` over `[0, ∞)` in panels `[0, w], [w, 2w], [2w, 4w], ...`
/// and stops once the geometric tail estimate built from the last two panel
/// sums falls under half the target.
fn panels_to_infinity<G: Fn(f64) -> f64>(
    g: G,
    first_width: f64,
    limit: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult, NumericsError> {
    let mut sum = 0.0;
    let mut err = 0.0;
    let mut evaluations = 0;
    let mut lo = 0.0;
    let mut hi = first_width;
    let mut prev: Option<f64> = None;
    let mut growing = 0;
    // A sharp peak in one panel makes the next ratio look tiny even when a
    // slower tail follows, so the stop rule must hold twice in a row.
    let mut quiet = 0;

    while lo < limit {
        let panel_cfg = QuadConfig {
            abs_tol: cfg.target(sum).max(cfg.abs_tol) / 8.0,
            ..*cfg
        };
        let r = match quad_with(&g, lo, hi, &panel_cfg) {
            Ok(r) => r,
            Err(NumericsError::NonFinite { .. }) if prev.is_some() => {
                return Err(NumericsError::NoDecay { at: lo })
            }
            Err(NumericsError::QuadNonConvergence { partial })
                if prev.is_some_and(|p| partial.value.abs() >= p.abs()) =>
            {
                return Err(NumericsError::NoDecay { at: lo })
            }
            Err(e) => return Err(e),
        };
        sum += r.value;
        err += r.abs_error;
        evaluations += r.evaluations;

        if let Some(p) = prev {
            let cur = r.value.abs();
            let tail = if cur == 0.0 {
                0.0
            } else if cur < p.abs() {
                let rho = cur / p.abs();
                cur * rho / (1.0 - rho)
            } else {
                growing += 1;
                if growing >= 8 {
                    return Err(NumericsError::NoDecay { at: hi });
                }
                f64::INFINITY
            };
            if cur < p.abs() {
                growing = 0;
            }
            if tail <= 0.5 * cfg.target(sum) {
                quiet += 1;
            } else {
                quiet = 0;
            }
            if quiet >= 2 {
                return Ok(QuadResult {
                    value: sum,
                    abs_error: err + tail,
                    evaluations,
                });
            }
        }
        prev = Some(r.value);
        lo = hi;
        hi *= 2.0;
    }
    Err(NumericsError::NoDecay { at: lo })
}

/// `∫_a^∞ f(z) dz` for an eventually decaying integrand.
pub fn quad_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    decay: Decay,
    cfg: &QuadConfig,
) -> Result<QuadResult, NumericsError> {
    if !a.is_finite() {
        return Err(NumericsError::InvalidInput(format!(
            "finite lower limit required, got {a}"
        )));
    }
    match decay {
        Decay::Algebraic => {
            let s = if a > 0.0 { a } else { 1.0 };
            let g = |t: f64| {
                let z = a + s * t.exp_m1();
                let v = f(z);
                if v == 0.0 {
                    0.0
                } else {
                    v * s * t.exp()
                }
            };
            panels_to_infinity(g, 1.0, 700.0, cfg)
        }
        Decay::Exponential { scale } => {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(NumericsError::InvalidInput(format!(
                    "decay scale must be positive, got {scale}"
                )));
            }
            panels_to_infinity(|u| f(a + u), scale, scale * 2f64.powi(60), cfg)
        }
    }
}

/// `∫_lower^x f(y) dy` for integrands with an integrable (typically
/// power-law) singularity at `lower`. Substituting `y = lower + (x - lower)
/// e^{-t}` maps `y^p` behaviour at the endpoint to `e^{-(p+1)t}` decay, which
/// the panel integrator handles without resolving the singularity by
/// bisection.
pub fn quad_from_lower<F: Fn(f64) -> f64>(
    f: F,
    lower: f64,
    x: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult, NumericsError> {
    if !(lower.is_finite() && x.is_finite()) || x < lower {
        return Err(NumericsError::InvalidInput(format!(
            "need finite lower <= x, got [{lower}, {x}]"
        )));
    }
    if x == lower {
        return Ok(QuadResult {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
        });
    }
    let width = x - lower;
    let g = |t: f64| {
        let w = width * (-t).exp();
        let y = lower + w;
        if y <= lower {
            return 0.0;
        }
        let v = f(y);
        if v == 0.0 {
            0.0
        } else {
            v * w
        }
    };
    panels_to_infinity(g, 1.0, 700.0, cfg)
}
