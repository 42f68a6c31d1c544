//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. `FB_ACCEPTANCE=1,4,10` runs a subset.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use fbound::boundary::{log_grid, monotonicity_violations, MONOTONE_SLACK};
use fbound::closed_form::{gbm_ces_polynomial, ClosedFormBoundary};
use fbound::mc::{
    foc_spot_check, policy_comparison, verify_backward_equation, verify_joint_law, JointBins, MCConfig,
    VerificationReport,
};
use fbound::numerics::{hypergeom_2f1_terminating, log_cumulative, quad, quad_with, QuadConfig, SignedPolynomial};
use fbound::solver::{residual, solve_on_grid, SolverConfig};
use fbound::{DiffusionSpec, Execution, ProfitSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), String>;

const EXEC: Execution = Execution::Parallel;

fn cases() -> Vec<(&'static str, DiffusionSpec, ProfitSpec)> {
    let cd = ProfitSpec::cobb_douglas(0.5, 0.5).unwrap();
    let mut out = vec![
        ("gbm+cd", DiffusionSpec::gbm(0.0, 1.0, 0.5).unwrap(), cd),
        ("bessel3+cd", DiffusionSpec::bessel3(0.5).unwrap(), cd),
        ("cev+cd", DiffusionSpec::cev(0.5, 1.0, 0.5).unwrap(), cd),
    ];
    for n in [2, 3, 5] {
        let ces = ProfitSpec::ces(n).unwrap();
        out.push(("gbm+ces", DiffusionSpec::gbm(0.0, 1.0, 1.5).unwrap(), ces));
        out.push(("bessel3+ces", DiffusionSpec::bessel3(1.5).unwrap(), ces));
        out.push(("cev+ces", DiffusionSpec::cev(1.5, 1.0, 0.5).unwrap(), ces));
    }
    out
}

fn label(name: &str, p: &ProfitSpec) -> String {
    match p {
        ProfitSpec::Ces { n } => format!("{name} n={n}"),
        _ => name.to_string(),
    }
}

fn e(err: impl std::fmt::Display) -> String {
    err.to_string()
}

fn within(budget: Duration, start: Instant) -> bool {
    start.elapsed() <= budget
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let grid = log_grid(1e-2, 1e2, 20).map_err(e)?;
    let cfg = SolverConfig::default();
    let mut worst = (0.0f64, String::new());
    for (name, d, p) in cases() {
        let b = ClosedFormBoundary::new(d, p).map_err(e)?;
        for &x in &grid {
            let res = residual(&d, &p, &b, x, &cfg).map_err(e)?;
            if !(res.residual.abs() <= worst.0) {
                worst = (res.residual.abs(), format!("{} at x={x:.3e}", label(name, &p)));
            }
        }
    }
    let ok = worst.0 <= 1e-6 && within(Duration::from_secs(120), start);
    Ok((
        ok,
        format!(
            "max |residual| = {:.2e} ({}), 12 boundaries x 20 points, {:.1} s (limit 1e-6, 120 s)",
            worst.0,
            worst.1,
            start.elapsed().as_secs_f64()
        ),
    ))
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let grid = log_grid(1e-2, 1e2, 200).map_err(e)?;
    let mut worst = (0.0f64, String::new());
    for opaque in [false, true] {
        let cfg = SolverConfig {
            use_power_terms: !opaque,
            ..SolverConfig::default()
        };
        for (name, d, p) in cases() {
            let exact = ClosedFormBoundary::new(d, p).map_err(e)?.eval_grid(&grid).map_err(e)?;
            let solved = solve_on_grid(&d, &p, &grid, &cfg, EXEC).map_err(e)?;
            for (i, (s, c)) in solved.values().iter().zip(&exact).enumerate() {
                let rel = (s - c).abs() / c.abs();
                if !(rel <= worst.0) {
                    let path = if opaque { "re-integrating" } else { "power terms" };
                    worst = (rel, format!("{} via {path} at x={:.3e}", label(name, &p), grid[i]));
                }
            }
        }
    }
    let ok = worst.0 <= 1e-6 && within(Duration::from_secs(300), start);
    Ok((
        ok,
        format!(
            "max relative gap = {:.2e} ({}), 12 boundaries x 200 points x 2 solver paths, {:.1} s (limit 1e-6, 300 s)",
            worst.0,
            worst.1,
            start.elapsed().as_secs_f64()
        ),
    ))
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn criterion_3() -> Check {
    let grid = log_grid(1e-2, 1e2, 200).map_err(e)?;
    let cfg = SolverConfig::default();
    let lx: Vec<f64> = grid.iter().map(|x| x.ln()).collect();

    let d = DiffusionSpec::gbm(0.0, 1.0, 0.5).map_err(e)?;
    let (alpha, beta) = (0.5, 0.5);
    let p = ProfitSpec::cobb_douglas(alpha, beta).map_err(e)?;
    let solved = solve_on_grid(&d, &p, &grid, &cfg, EXEC).map_err(e)?;
    let lb: Vec<f64> = solved.values().iter().map(|b| b.ln()).collect();
    let slope_gap = (slope(&lx, &lb) - alpha / (1.0 - beta)).abs();

    // γ₁ from the quadratic ½σ²γ(γ-1) + μγ = r with μ=0, σ=1
    let r: f64 = 1.5;
    let gamma1 = 0.5 + (0.25 + 2.0 * r).sqrt();
    let theta = gamma1 - 1.0;
    let d = DiffusionSpec::gbm(0.0, 1.0, r).map_err(e)?;
    let mut spread = 0.0f64;
    let mut c2_gap = 0.0;
    for n in [2, 3, 5] {
        let p = ProfitSpec::ces(n).map_err(e)?;
        let solved = solve_on_grid(&d, &p, &grid, &cfg, EXEC).map_err(e)?;
        let ratios: Vec<f64> = solved.values().iter().zip(&grid).map(|(b, x)| b / x).collect();
        let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
        spread = spread.max((hi - lo) / lo);
        if n == 2 {
            let c2 = (r - 1.0) * (2.0 * theta + 1.0) / (2.0 * theta);
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            c2_gap = (mean - c2.powi(-2)).abs() / c2.powi(-2);
        }
    }
    let ok = slope_gap <= 1e-8 && spread <= 1e-10 && c2_gap <= 1e-10;
    Ok((
        ok,
        format!(
            "GBM+CD slope error {slope_gap:.2e} (limit 1e-8); GBM+CES b/x relative spread {spread:.2e}, \
             n=2 constant vs C_2^-2 {c2_gap:.2e} (limit 1e-10)"
        ),
    ))
}

// F(-m, b; c; z) summed term by term, independently of the library.
fn series_2f1(m: u32, b: f64, c: f64, z: f64) -> f64 {
    let (mut term, mut sum) = (1.0, 1.0);
    for i in 0..m {
        let i = i as f64;
        term *= (-(m as f64) + i) * (b + i) / ((c + i) * (i + 1.0)) * z;
        sum += term;
    }
    sum
}

fn criterion_4() -> Check {
    let (mu, sigma, r): (f64, f64, f64) = (0.0, 1.0, 1.5);
    let gamma1 = 0.5 + (0.25 + 2.0 * r).sqrt();
    let theta = gamma1 - 1.0;
    let mut worst = 0.0f64;
    let mut changes_ok = true;
    for n in 2..=10u32 {
        let poly = gbm_ces_polynomial(mu, sigma, r, n).map_err(e)?;
        let signs: Vec<bool> = poly.coefficients().iter().filter(|c| **c != 0.0).map(|c| *c > 0.0).collect();
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        changes_ok &= changes == 1 && poly.sign_changes() == 1;
        let c = poly.positive_root(1e-12).map_err(e)?;
        let nt = n as f64 * theta;
        let lib = hypergeom_2f1_terminating(n - 1, nt, nt + 1.0, -c).map_err(e)?;
        let own = series_2f1(n - 1, nt, nt + 1.0, -c);
        worst = worst.max((lib - r).abs()).max((own - r).abs());
    }
    Ok((
        changes_ok && worst <= 1e-10,
        format!("n = 2..10: one sign change each = {changes_ok}; max |2F1 - r| = {worst:.2e} (limit 1e-10)"),
    ))
}

fn criterion_5() -> Check {
    let grid = log_grid(1e-2, 1e2, 200).map_err(e)?;
    let cfg = SolverConfig::default();
    let mut violations = 0;
    let mut aux_violations = 0;
    let mut curves = 0;
    for (_, d, p) in cases() {
        let cf = ClosedFormBoundary::new(d, p).map_err(e)?;
        let table = cf.table(&grid).map_err(e)?;
        violations += monotonicity_violations(&table.b, MONOTONE_SLACK).len();
        if let Some(f) = &table.f {
            let reversed: Vec<f64> = f.iter().rev().copied().collect();
            aux_violations += monotonicity_violations(&reversed, MONOTONE_SLACK).len();
        }
        // solve_on_grid refuses decreasing output; count independently anyway
        let solved = solve_on_grid(&d, &p, &grid, &cfg, EXEC).map_err(e)?;
        violations += monotonicity_violations(solved.values(), MONOTONE_SLACK).len();
        curves += 2;
    }
    Ok((
        violations == 0 && aux_violations == 0,
        format!(
            "{violations} decreases over {curves} boundaries x 200 points, {aux_violations} increases of f_n \
             (slack {MONOTONE_SLACK:e})"
        ),
    ))
}

fn mc(paths: usize, seed: u64) -> MCConfig {
    MCConfig {
        paths,
        step: 1e-3,
        base_seed: seed,
        antithetic: false,
    }
}

fn describe(reports: &[VerificationReport]) -> String {
    reports
        .iter()
        .map(|r| {
            format!(
                "{}: {:.5} vs {} (se {:.1e}, bias {:.1e}, z {:.2})",
                r.name, r.estimate, r.target, r.stderr, r.bias_allowance, r.z
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn criterion_6() -> Check {
    let start = Instant::now();
    let mut reports = Vec::new();
    let d = DiffusionSpec::gbm(0.0, 1.0, 0.5).map_err(e)?;
    let p = ProfitSpec::cobb_douglas(0.5, 0.5).map_err(e)?;
    let b = ClosedFormBoundary::new(d, p).map_err(e)?;
    for (k, x) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        reports.push(verify_backward_equation(&d, &p, &b, x, &mc(100_000, 600 + k as u64), EXEC).map_err(e)?);
    }
    let d = DiffusionSpec::gbm(0.0, 1.0, 1.5).map_err(e)?;
    let p = ProfitSpec::ces(2).map_err(e)?;
    let b = ClosedFormBoundary::new(d, p).map_err(e)?;
    let mut ces = verify_backward_equation(&d, &p, &b, 1.0, &mc(100_000, 610), EXEC).map_err(e)?;
    ces.name = format!("ces {}", ces.name);
    reports.push(ces);
    let ok = reports.iter().all(|r| r.pass) && within(Duration::from_secs(600), start);
    Ok((ok, format!("{} [{:.1} s, limit 600 s]", describe(&reports), start.elapsed().as_secs_f64())))
}

fn criterion_7() -> Check {
    let start = Instant::now();
    let d = DiffusionSpec::gbm(0.0, 1.0, 0.5).map_err(e)?;
    let bins = JointBins::covering(&d, 1.0, 20, 2.5e-4).map_err(e)?;
    let rep = verify_joint_law(&d, 1.0, &bins, &mc(200_000, 700), EXEC).map_err(e)?;
    let ok = rep.pass && within(Duration::from_secs(600), start);
    Ok((
        ok,
        format!(
            "{}; coverage {:.5}; chi2 {:.1} on {} dof [{:.1} s, limit 600 s]",
            describe(&rep.checks),
            rep.empirical_coverage,
            rep.chi_square,
            rep.dof,
            start.elapsed().as_secs_f64()
        ),
    ))
}

fn criterion_8() -> Check {
    let start = Instant::now();
    let d = DiffusionSpec::gbm(0.0, 1.0, 0.5).map_err(e)?;
    let p = ProfitSpec::cobb_douglas(0.5, 0.5).map_err(e)?;
    let b = ClosedFormBoundary::new(d, p).map_err(e)?;
    let cmp = policy_comparison(&d, &p, &b, 1.0, 0.1, &[1.0, 0.5, 2.0], &mc(100_000, 800), EXEC).map_err(e)?;
    let js: Vec<String> = cmp
        .factors
        .iter()
        .zip(&cmp.outcomes)
        .map(|(f, o)| format!("J({f}b) = {:.5} (se {:.1e})", o.estimate, o.stderr))
        .collect();
    let ok = cmp.pass && within(Duration::from_secs(600), start);
    Ok((
        ok,
        format!("{}; {} [{:.1} s, limit 600 s]", js.join(", "), describe(&cmp.checks), start.elapsed().as_secs_f64()),
    ))
}

fn criterion_9() -> Check {
    let d = DiffusionSpec::gbm(0.0, 1.0, 0.5).map_err(e)?;
    let p = ProfitSpec::cobb_douglas(0.5, 0.5).map_err(e)?;
    let b = ClosedFormBoundary::new(d, p).map_err(e)?;
    let y = b.eval(1.0).map_err(e)?;
    let rep = foc_spot_check(&d, &p, &b, 1.0, y, &[0.0, 0.5, 1.0], &mc(100_000, 900), EXEC).map_err(e)?;
    Ok((rep.pass, format!("y = b(1) = {y:.6}; {}", describe(&rep.checks))))
}

// first sign change of f on [0, hi] at mesh `coarse`, refined at mesh `fine`
fn sign_scan(f: impl Fn(f64) -> f64, hi: f64, coarse: f64, fine: f64) -> Option<f64> {
    let steps = (hi / coarse) as usize;
    let s0 = f(0.0).signum();
    let k = (1..=steps).find(|k| f(*k as f64 * coarse).signum() != s0)?;
    let a = (k - 1) as f64 * coarse;
    let m = (coarse / fine).round() as usize;
    let j = (1..=m).find(|j| f(a + *j as f64 * fine).signum() != s0)?;
    Some(a + (j as f64 - 0.5) * fine)
}

fn criterion_10() -> Check {
    // Bessel+CD kernel g(1) = ∫_0^1 y^{3/2} sinh(y) dy against a 10^6-point trapezoid rule
    let n = 1_000_000;
    let h = 1.0 / n as f64;
    let w = |y: f64| y.powf(1.5) * y.sinh();
    let trap = h * ((1..n).map(|i| w(i as f64 * h)).sum::<f64>() + 0.5 * (w(0.0) + w(1.0)));
    let q = quad(w, 0.0, 1.0, 1e-12).map_err(e)?.value;
    let trap_gap = (q - trap).abs();

    // ∫_0^x y^{2γ-1} e^{c y^{2γ}} dy = (σ²/2r)(e^{c x^{2γ}} - 1), c = r/(γσ²)
    let (r, sigma) = (0.5, 1.0);
    let mut cev_gap = 0.0f64;
    for gamma in [0.5, 0.25, 0.1] {
        let c = r / (gamma * sigma * sigma);
        for x in [0.01, 0.3, 1.0, 2.0, 5.0] {
            let exact = sigma * sigma / (2.0 * r) * (c * f64::powf(x, 2.0 * gamma)).exp_m1();
            let direct = quad_with(
                |y: f64| y.powf(2.0 * gamma - 1.0) * (c * y.powf(2.0 * gamma)).exp(),
                0.0,
                x,
                &QuadConfig::relative(1e-13),
            )
            .map_err(e)?
            .value;
            let logged = log_cumulative(
                |y: f64| (2.0 * gamma - 1.0) * y.ln() + c * y.powf(2.0 * gamma),
                0.0,
                &[x],
                &QuadConfig::relative(1e-13),
            )
            .map_err(e)?[0]
                .ln_value
                .exp();
            cev_gap = cev_gap.max((direct - exact).abs() / exact.max(1.0)).max((logged - exact).abs() / exact.max(1.0));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut root_gap = 0.0f64;
    for _ in 0..100 {
        let mut coefficients = vec![-rng.random_range(0.1..10.0)];
        coefficients.extend((0..6).map(|_| rng.random_range(0.01..5.0)));
        let poly = SignedPolynomial::new(coefficients.clone()).map_err(e)?;
        let root = poly.positive_root(1e-12).map_err(e)?;
        let eval = |f: f64| coefficients.iter().rev().fold(0.0, |acc, c| acc * f + c);
        let scanned = sign_scan(eval, 1e3, 1e-3, 1e-6).ok_or("sign scan found no root")?;
        root_gap = root_gap.max((root - scanned).abs());
    }
    let ok = trap_gap <= 1e-9 && cev_gap <= 1e-9 && root_gap <= 1e-6;
    Ok((
        ok,
        format!(
            "trapezoid gap {trap_gap:.2e}, CEV antiderivative gap {cev_gap:.2e} (limit 1e-9); \
             max |root - sign scan| {root_gap:.2e} over 100 polynomials (limit 1e-6)"
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Check); 10] = [
        (1, "closed-form residuals", criterion_1),
        (2, "solver vs closed forms", criterion_2),
        (3, "GBM exponent and CES linearity", criterion_3),
        (4, "Descartes polynomial and 2F1", criterion_4),
        (5, "monotonicity", criterion_5),
        (6, "backward equation MC", criterion_6),
        (7, "joint law MC", criterion_7),
        (8, "policy optimality ordering", criterion_8),
        (9, "first-order conditions", criterion_9),
        (10, "numerics kernels", criterion_10),
    ];
    let only: Option<Vec<u32>> = std::env::var("FB_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = 0;
    for (id, title, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = run().unwrap_or_else(|err| (false, format!("error: {err}")));
        if !pass {
            failed += 1;
        }
        println!(
            "{} [{id}] {title}: {detail} ({:.1} s)",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
