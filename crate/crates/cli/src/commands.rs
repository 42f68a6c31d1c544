use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use fbound::boundary::log_grid;
use fbound::mc::{
    foc_spot_check, policy_comparison, policy_payoff, verify_backward_equation, verify_joint_law, JointBins,
    MCConfig, VerificationReport,
};
use fbound::solver::{residual_report, PointwiseBoundary};
use fbound::{solve_on_grid, Boundary, BoundaryCurve, ClosedFormBoundary, Error, Execution, SolverConfig};
use serde::Serialize;
use serde_json::Value;

use crate::manifest::{GridSpec, MonteCarlo, RunManifest, Tolerances};
use crate::output::{emit, render_csv, render_json, Cell, Format, Table};
use crate::problem::Problem;
use crate::CliError;

/// Monte Carlo verdicts are taken at this many standard errors.
const MC_SIGMAS: f64 = 3.0;
const JOINT_BINS: usize = 20;
const JOINT_TAIL: f64 = 2.5e-4;
const FOC_PROBES: [f64; 3] = [0.0, 0.5, 1.0];
const DEFAULT_FACTORS: [f64; 3] = [1.0, 0.5, 2.0];

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Problem file with the diffusion and the profit.
    #[arg(long)]
    pub spec: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long, default_value_t = 1e-2)]
    pub grid_min: f64,
    #[arg(long, default_value_t = 1e2)]
    pub grid_max: f64,
    #[arg(long, default_value_t = 200)]
    pub grid_points: usize,
    /// Pass threshold of deterministic checks.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct McArgs {
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Time step of the discretized schemes.
    #[arg(long, default_value_t = fbound::diffusion::DEFAULT_STEP)]
    pub step: f64,
    /// Antithetic pairs (not available for the joint-law suite).
    #[arg(long)]
    pub antithetic: bool,
}

impl McArgs {
    fn config(&self) -> MCConfig {
        MCConfig {
            paths: self.paths,
            step: self.step,
            base_seed: self.seed,
            antithetic: self.antithetic,
        }
    }

    fn manifest(&self) -> MonteCarlo {
        MonteCarlo {
            paths: self.paths,
            step: self.step,
            seed: self.seed,
            antithetic: self.antithetic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Closed,
    Generic,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceMethod {
    Closed,
    Generic,
}

#[derive(Debug, Clone, Args)]
pub struct BoundaryArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "closed")]
    pub method: Method,
}

/// Where the boundary comes from in `verify` and `simulate`.
#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// Boundary table in JSON (`{"x": [...], "b": [...]}` or a `boundary`
    /// artifact). Overrides `--method`.
    #[arg(long)]
    pub boundary: Option<PathBuf>,
    /// Closed form when the pair has one, generic solver otherwise.
    #[arg(long, value_enum)]
    pub method: Option<SourceMethod>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Residual,
    Backward,
    Jointlaw,
    Policy,
    Foc,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub mc: McArgs,
    #[arg(long, value_enum, default_value = "all")]
    pub suite: Suite,
    /// Initial state of the Monte Carlo suites.
    #[arg(long, default_value_t = 1.0)]
    pub x: f64,
    /// Initial capacity; the policy suite defaults to 0.1 and the
    /// first-order suite to b(x).
    #[arg(long)]
    pub y: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub mc: McArgs,
    #[arg(long, default_value_t = 1.0)]
    pub x: f64,
    #[arg(long, default_value_t = 0.1)]
    pub y: f64,
    /// Also evaluate the policies reflecting at scaled boundaries.
    #[arg(long)]
    pub compare: bool,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_FACTORS)]
    pub factors: Vec<f64>,
    /// Keep per-path investment and final capacity in the JSON output.
    #[arg(long)]
    pub per_path: bool,
}

pub struct Run {
    pub text: String,
    pub out: Option<PathBuf>,
    pub failures: Vec<String>,
}

impl Run {
    pub fn finish(self) -> Result<(), CliError> {
        emit(self.out.as_deref(), &self.text)?;
        if self.failures.is_empty() {
            Ok(())
        } else {
            Err(CliError::Verification(self.failures))
        }
    }
}

impl Common {
    fn grid(&self) -> Result<Vec<f64>, CliError> {
        Ok(log_grid(self.grid_min, self.grid_max, self.grid_points)?)
    }

    fn grid_spec(&self) -> GridSpec {
        GridSpec {
            min: self.grid_min,
            max: self.grid_max,
            points: self.grid_points,
        }
    }

    fn tolerances(&self, solver: &SolverConfig, mc: bool) -> Tolerances {
        Tolerances {
            check: self.tol,
            inner_rel_tol: solver.inner_rel_tol,
            root_tol: solver.root_tol,
            pointwise_tol: solver.pointwise_tol,
            outer_abs_tol: solver.outer_abs_tol,
            mc_sigmas: mc.then_some(MC_SIGMAS),
        }
    }

    fn outputs(&self) -> Vec<String> {
        vec![self.out.as_ref().map_or_else(|| "-".into(), |p| p.display().to_string())]
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidInput(format!("--tol must be positive, got {}", self.tol)).into());
        }
        Ok(())
    }
}

fn render<T: Serialize>(
    format: Format,
    manifest: &RunManifest,
    result: &T,
    table: impl FnOnce() -> Table,
) -> Result<String, CliError> {
    match format {
        Format::Json => render_json(manifest, result),
        Format::Csv => render_csv(manifest, &table()),
    }
}

#[derive(Debug, Serialize)]
struct BoundaryResult {
    method: Method,
    x: Vec<f64>,
    /// Closed form for `closed` and `both`, solver output for `generic`.
    b: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b_generic: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rel_diff: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    check: Option<VerificationReport>,
}

pub fn boundary(args: &BoundaryArgs, exec: Execution) -> Result<Run, CliError> {
    let c = &args.common;
    c.validate()?;
    let problem = Problem::load(&c.spec)?;
    let grid = c.grid()?;
    let solver = SolverConfig::default();
    let closed = match args.method {
        Method::Generic => None,
        _ => Some(ClosedFormBoundary::new(problem.diffusion, problem.closed_form_profit()?)?.table(&grid)?),
    };
    let generic = match args.method {
        Method::Closed => None,
        _ => Some(solve_on_grid(&problem.diffusion, problem.profit(), &grid, &solver, exec)?),
    };
    let mut result = BoundaryResult {
        method: args.method,
        x: grid.clone(),
        b: Vec::new(),
        f: None,
        b_generic: None,
        rel_diff: None,
        check: None,
    };
    match (closed, generic) {
        (Some(t), None) => {
            result.b = t.b;
            result.f = t.f;
        }
        (None, Some(g)) => result.b = g.values().to_vec(),
        (Some(t), Some(g)) => {
            let rel: Vec<f64> = t.b.iter().zip(g.values()).map(|(a, b)| (b - a).abs() / a).collect();
            let (worst, gap) = rel
                .iter()
                .copied()
                .enumerate()
                .fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
            result.check = Some(VerificationReport::tolerance(
                format!("method_agreement x={}", grid[worst]),
                0.0,
                gap,
                c.tol,
            ));
            result.b = t.b;
            result.f = t.f;
            result.b_generic = Some(g.values().to_vec());
            result.rel_diff = Some(rel);
        }
        (None, None) => unreachable!(),
    }
    let manifest = RunManifest {
        tool: crate::manifest::TOOL,
        version: env!("CARGO_PKG_VERSION"),
        command: "boundary".into(),
        problem: problem.file(),
        r: problem.discount(),
        boundary: method_name(args.method).into(),
        grid: c.grid_spec(),
        tolerances: c.tolerances(&solver, false),
        monte_carlo: None,
        x: None,
        y: None,
        outputs: c.outputs(),
    };
    let failures = failures("boundary", result.check.iter());
    let text = render(c.format.unwrap_or(Format::Csv), &manifest, &result, || boundary_table(&result))?;
    Ok(Run {
        text,
        out: c.out.clone(),
        failures,
    })
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Closed => "closed",
        Method::Generic => "generic",
        Method::Both => "both",
    }
}

fn boundary_table(r: &BoundaryResult) -> Table {
    let mut columns = vec!["x", "b"];
    if r.f.is_some() {
        columns.push("f");
    }
    if r.b_generic.is_some() {
        columns.extend(["b_generic", "rel_diff"]);
    }
    let mut table = Table::new(columns);
    for i in 0..r.x.len() {
        let mut row = vec![Cell::from(r.x[i]), r.b[i].into()];
        if let Some(f) = &r.f {
            row.push(f[i].into());
        }
        if let (Some(g), Some(d)) = (&r.b_generic, &r.rel_diff) {
            row.extend([Cell::from(g[i]), d[i].into()]);
        }
        table.push(row);
    }
    table
}

fn failures<'a>(suite: &str, checks: impl Iterator<Item = &'a VerificationReport>) -> Vec<String> {
    checks.filter(|c| !c.pass).map(|c| format!("{suite}: {}", c.name)).collect()
}

/// The boundary used by `verify` and `simulate`. `curve` is what the Monte
/// Carlo suites evaluate; the residual suite re-solves generic boundaries
/// pointwise so that interpolation does not enter the residual.
struct Source {
    label: String,
    closed: Option<ClosedFormBoundary>,
    curve: Option<BoundaryCurve>,
    pointwise: bool,
}

impl Source {
    fn build(args: &SourceArgs, problem: &Problem, grid: &[f64], solver: &SolverConfig, exec: Execution) -> Result<Self, CliError> {
        if let Some(path) = &args.boundary {
            return Ok(Source {
                label: format!("file:{}", path.display()),
                closed: None,
                curve: Some(read_curve(path)?),
                pointwise: false,
            });
        }
        let method = match args.method {
            Some(m) => m,
            None if problem.closed_form_profit().is_ok() => SourceMethod::Closed,
            None => SourceMethod::Generic,
        };
        Ok(match method {
            SourceMethod::Closed => Source {
                label: "closed".into(),
                closed: Some(ClosedFormBoundary::new(problem.diffusion, problem.closed_form_profit()?)?),
                curve: None,
                pointwise: false,
            },
            SourceMethod::Generic => Source {
                label: "generic".into(),
                closed: None,
                curve: Some(solve_on_grid(&problem.diffusion, problem.profit(), grid, solver, exec)?),
                pointwise: true,
            },
        })
    }

    fn mc(&self) -> &dyn Boundary {
        match (&self.closed, &self.curve) {
            (Some(c), _) => c,
            (None, Some(c)) => c,
            (None, None) => unreachable!(),
        }
    }
}

fn read_curve(path: &Path) -> Result<BoundaryCurve, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("boundary file {}: {e}", path.display())))?;
    let table = value.get("result").unwrap_or(&value);
    let column = |key: &str| -> Result<Vec<f64>, CliError> {
        serde_json::from_value(table.get(key).cloned().unwrap_or(Value::Null)).map_err(|e| {
            CliError::from(Error::InvalidInput(format!(
                "boundary file {} needs a numeric array \"{key}\": {e}",
                path.display()
            )))
        })
    };
    Ok(BoundaryCurve::new(column("x")?, column("b")?)?)
}

#[derive(Debug, Serialize)]
struct SuiteResult {
    suite: Suite,
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y: Option<f64>,
    checks: Vec<VerificationReport>,
    detail: Value,
}

#[derive(Debug, Serialize)]
struct VerifyResult {
    pass: bool,
    suites: Vec<SuiteResult>,
}

fn detail<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

pub fn verify(args: &VerifyArgs, exec: Execution) -> Result<Run, CliError> {
    let c = &args.common;
    c.validate()?;
    let problem = Problem::load(&c.spec)?;
    let grid = c.grid()?;
    let solver = SolverConfig::default();
    let source = Source::build(&args.source, &problem, &grid, &solver, exec)?;
    let suites: Vec<Suite> = match args.suite {
        Suite::All => vec![Suite::Residual, Suite::Backward, Suite::Jointlaw, Suite::Policy, Suite::Foc],
        s => vec![s],
    };
    let needs_mc = suites.iter().any(|s| *s != Suite::Residual);
    let cfg = args.mc.config();
    if needs_mc {
        cfg.validate()?;
    }
    let (d, p) = (&problem.diffusion, problem.profit());
    let b = source.mc();
    let mut results = Vec::new();
    for suite in suites {
        let res = match suite {
            Suite::Residual => {
                let report = if source.pointwise {
                    let mut pw = PointwiseBoundary::new(d, p)?;
                    pw.config = solver;
                    residual_report(d, p, &pw, &grid, &solver, exec)?
                } else {
                    residual_report(d, p, b, &grid, &solver, exec)?
                };
                let worst = report
                    .points
                    .iter()
                    .max_by(|a, b| a.residual.abs().total_cmp(&b.residual.abs()))
                    .expect("grid is nonempty");
                let check = VerificationReport::tolerance(
                    format!("residual x={}", worst.x),
                    0.0,
                    report.max_abs_residual,
                    c.tol,
                );
                SuiteResult {
                    suite,
                    pass: check.pass,
                    x: None,
                    y: None,
                    checks: vec![check],
                    detail: detail(&report),
                }
            }
            Suite::Backward => {
                let check = verify_backward_equation(d, p, b, args.x, &cfg, exec)?;
                SuiteResult {
                    suite,
                    pass: check.pass,
                    x: Some(args.x),
                    y: None,
                    checks: vec![check],
                    detail: Value::Null,
                }
            }
            Suite::Jointlaw => {
                let bins = JointBins::covering(d, args.x, JOINT_BINS, JOINT_TAIL)?;
                let report = verify_joint_law(d, args.x, &bins, &cfg, exec)?;
                SuiteResult {
                    suite,
                    pass: report.pass,
                    x: Some(args.x),
                    y: None,
                    checks: report.checks.clone(),
                    detail: detail(&report),
                }
            }
            Suite::Policy => {
                let y = args.y.unwrap_or(0.1);
                let report = policy_comparison(d, p, b, args.x, y, &DEFAULT_FACTORS, &cfg, exec)?;
                SuiteResult {
                    suite,
                    pass: report.pass,
                    x: Some(args.x),
                    y: Some(y),
                    checks: report.checks.clone(),
                    detail: detail(&report),
                }
            }
            Suite::Foc => {
                let y = match args.y {
                    Some(y) => y,
                    None => b.value(args.x)?,
                };
                let report = foc_spot_check(d, p, b, args.x, y, &FOC_PROBES, &cfg, exec)?;
                SuiteResult {
                    suite,
                    pass: report.pass,
                    x: Some(args.x),
                    y: Some(y),
                    checks: report.checks.clone(),
                    detail: Value::Null,
                }
            }
            Suite::All => unreachable!(),
        };
        results.push(res);
    }
    let failures: Vec<String> = results
        .iter()
        .flat_map(|s| failures(suite_name(s.suite), s.checks.iter()))
        .collect();
    let result = VerifyResult {
        pass: results.iter().all(|s| s.pass),
        suites: results,
    };
    let manifest = RunManifest {
        tool: crate::manifest::TOOL,
        version: env!("CARGO_PKG_VERSION"),
        command: format!("verify --suite {}", suite_name(args.suite)),
        problem: problem.file(),
        r: problem.discount(),
        boundary: source.label.clone(),
        grid: c.grid_spec(),
        tolerances: c.tolerances(&solver, needs_mc),
        monte_carlo: needs_mc.then(|| args.mc.manifest()),
        x: needs_mc.then_some(args.x),
        y: args.y,
        outputs: c.outputs(),
    };
    let text = render(c.format.unwrap_or(Format::Json), &manifest, &result, || verify_table(&result))?;
    Ok(Run {
        text,
        out: c.out.clone(),
        failures,
    })
}

fn suite_name(s: Suite) -> &'static str {
    match s {
        Suite::Residual => "residual",
        Suite::Backward => "backward",
        Suite::Jointlaw => "jointlaw",
        Suite::Policy => "policy",
        Suite::Foc => "foc",
        Suite::All => "all",
    }
}

fn verify_table(r: &VerifyResult) -> Table {
    let mut table = Table::new(vec![
        "suite",
        "check",
        "target",
        "estimate",
        "stderr",
        "z",
        "bias_allowance",
        "sigmas",
        "alternative",
        "samples",
        "pass",
    ]);
    for s in &r.suites {
        for c in &s.checks {
            let alt = serde_json::to_value(c.alternative).expect("serializes");
            table.push(vec![
                suite_name(s.suite).into(),
                c.name.clone().into(),
                c.target.into(),
                c.estimate.into(),
                c.stderr.into(),
                c.z.into(),
                c.bias_allowance.into(),
                c.sigmas.into(),
                alt.as_str().unwrap_or_default().into(),
                c.samples.into(),
                c.pass.into(),
            ]);
        }
    }
    table
}

#[derive(Debug, Serialize)]
struct SimulateResult {
    x: f64,
    y: f64,
    outcome: fbound::mc::PolicyOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<fbound::mc::PolicyComparison>,
}

pub fn simulate(args: &SimulateArgs, exec: Execution) -> Result<Run, CliError> {
    let c = &args.common;
    c.validate()?;
    let problem = Problem::load(&c.spec)?;
    let grid = c.grid()?;
    let solver = SolverConfig::default();
    let cfg = args.mc.config();
    cfg.validate()?;
    let source = Source::build(&args.source, &problem, &grid, &solver, exec)?;
    let (d, p, b) = (&problem.diffusion, problem.profit(), source.mc());
    let mut outcome = policy_payoff(d, p, b, args.x, args.y, &cfg, exec)?;
    if !args.per_path {
        outcome.per_path.clear();
    }
    let comparison = if args.compare {
        Some(policy_comparison(d, p, b, args.x, args.y, &args.factors, &cfg, exec)?)
    } else {
        None
    };
    let failures = comparison
        .as_ref()
        .map(|cmp| failures("simulate", cmp.checks.iter()))
        .unwrap_or_default();
    let result = SimulateResult {
        x: args.x,
        y: args.y,
        outcome,
        comparison,
    };
    let mut command = String::from("simulate");
    if args.compare {
        let f: Vec<String> = args.factors.iter().map(|f| f.to_string()).collect();
        command.push_str(&format!(" --compare --factors {}", f.join(",")));
    }
    let manifest = RunManifest {
        tool: crate::manifest::TOOL,
        version: env!("CARGO_PKG_VERSION"),
        command,
        problem: problem.file(),
        r: problem.discount(),
        boundary: source.label.clone(),
        grid: c.grid_spec(),
        tolerances: c.tolerances(&solver, true),
        monte_carlo: Some(args.mc.manifest()),
        x: Some(args.x),
        y: Some(args.y),
        outputs: c.outputs(),
    };
    let text = render(c.format.unwrap_or(Format::Json), &manifest, &result, || simulate_table(&result))?;
    Ok(Run {
        text,
        out: c.out.clone(),
        failures,
    })
}

fn simulate_table(r: &SimulateResult) -> Table {
    let mut table = Table::new(vec![
        "factor",
        "estimate",
        "stderr",
        "profit_term",
        "cost_term",
        "mean_final_capacity",
        "samples",
    ]);
    let rows: Vec<(f64, &fbound::mc::PolicyOutcome)> = match &r.comparison {
        Some(cmp) => cmp.factors.iter().copied().zip(&cmp.outcomes).collect(),
        None => vec![(1.0, &r.outcome)],
    };
    for (f, o) in rows {
        table.push(vec![
            f.into(),
            o.estimate.into(),
            o.stderr.into(),
            o.profit_term.into(),
            o.cost_term.into(),
            o.mean_final_capacity.into(),
            o.samples.into(),
        ]);
    }
    table
}
