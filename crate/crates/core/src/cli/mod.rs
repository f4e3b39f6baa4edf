//! The `iqvip` command-line runner.
//!
//! ```text
//! iqvip --command certify --problem example51 --sigma 0.59 --tau 0.000146
//! iqvip --command solve --problem example51 --sigma 0.59 --tau 0.000146 \
//!       --x0 7,5 --stop-error 0.1 --out inertial.csv
//! iqvip --command simulate --problem example51 --sigma 50 --tau 100 \
//!       --x0 7,5 --horizon 20 --out flow.csv
//! iqvip --command traffic --problem traffic-demo --sigma 0.6 --tau 0.02 \
//!       --mu 0.5 --out tolls.csv
//! iqvip --spec run.txt
//! ```
//!
//! The summary goes to stdout as JSON; traces go to `--out` as CSV. Exit
//! status is 0 on success, 1 for usage errors and 2 for numerical failures.
//! `IQVIP_LOG` sets the log filter.

pub mod problem_file;
pub mod spec_file;
pub mod trace_csv;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;
use serde_json::{json, Value};

use crate::builtin;
use crate::certificates::{check_discrete, time_varying_coefficients, ThetaPair};
use crate::dynamics::{self, constant, estimate_rate, integrate, DynamicsConfig, TrajectoryTrace};
use crate::error::IqvipError;
use crate::problem::IqvipProblem;
use crate::projections::estimate_rho;
use crate::solvers::{estimate_linear_rate, solve, IterTrace, SolverConfig, Variant};
use crate::traffic::{solve_tolls, TollRun, TrafficNetwork, UeParams};

use self::problem_file::ProblemFile;
use self::spec_file::{normalize_key, parse_spec_text, Entry};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

pub const DEFAULT_TAIL: f64 = 0.5;
pub const DEFAULT_TRAFFIC_ITERATIONS: usize = 150;
pub const DEFAULT_RHO_SAMPLES: usize = 1000;

/// Parameter keys understood by some command.
pub const PARAM_KEYS: &[&str] = &[
    "coefficients",
    "dt",
    "gap_tol",
    "h",
    "horizon",
    "max_iter",
    "mu",
    "rho_samples",
    "seed",
    "sigma",
    "stop_error",
    "stop_residual",
    "tail",
    "tau",
    "theta",
    "theta1",
    "v0",
    "variant",
    "x0",
    "x_prev",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Certify,
    Solve,
    Simulate,
    Traffic,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Certify => "certify",
            Command::Solve => "solve",
            Command::Simulate => "simulate",
            Command::Traffic => "traffic",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "certify" => Ok(Command::Certify),
            "solve" => Ok(Command::Solve),
            "simulate" => Ok(Command::Simulate),
            "traffic" => Ok(Command::Traffic),
            other => Err(format!(
                "unknown command `{other}`; expected certify, solve, simulate or traffic"
            )),
        }
    }
}

/// A built-in name or a path to a JSON document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProblemSource {
    Builtin(String),
    File(PathBuf),
}

impl ProblemSource {
    pub fn parse(s: &str) -> Self {
        match s {
            builtin::EXAMPLE51 | builtin::TRAFFIC_DEMO | builtin::FREE => {
                ProblemSource::Builtin(s.to_string())
            }
            path => ProblemSource::File(PathBuf::from(path)),
        }
    }
}

impl fmt::Display for ProblemSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemSource::Builtin(name) => f.write_str(name),
            ProblemSource::File(path) => write!(f, "{}", path.display()),
        }
    }
}

/// A malformed run description, located by spec-file line and field when known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError {
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl UsageError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { line: None, field: None, message: message.into() }
    }

    pub fn field(field: &str, message: impl Into<String>) -> Self {
        Self { line: None, field: Some(field.to_string()), message: message.into() }
    }

    pub fn at(line: usize, message: impl Into<String>) -> Self {
        Self { line: Some(line), field: None, message: message.into() }
    }

    pub fn field_at(line: usize, field: &str, message: impl Into<String>) -> Self {
        Self { line: Some(line), field: Some(field.to_string()), message: message.into() }
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(field) = &self.field {
            write!(f, "field `{field}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug)]
pub enum RunError {
    Usage(UsageError),
    Failed(IqvipError),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Failed(e) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Usage(e) => e.fmt(f),
            RunError::Failed(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for RunError {}

impl From<UsageError> for RunError {
    fn from(e: UsageError) -> Self {
        RunError::Usage(e)
    }
}

impl From<IqvipError> for RunError {
    fn from(e: IqvipError) -> Self {
        RunError::Failed(e)
    }
}

/// One command on one problem with a flat parameter map.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub command: Command,
    pub problem: ProblemSource,
    pub params: BTreeMap<String, String>,
    pub output_path: Option<PathBuf>,
    /// Spec-file line of each parameter, for diagnostics.
    pub lines: BTreeMap<String, usize>,
}

impl RunSpec {
    pub fn new(command: Command, problem: ProblemSource) -> Self {
        Self { command, problem, params: BTreeMap::new(), output_path: None, lines: BTreeMap::new() }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(normalize_key(key), value.to_string());
        self
    }

    pub fn output(mut self, path: impl Into<PathBuf>) -> Self {
        self.output_path = Some(path.into());
        self
    }

    /// Builds a spec from `key = value` entries (`command`, `problem`, `out`
    /// plus parameters).
    pub fn from_entries(mut entries: BTreeMap<String, Entry>) -> Result<Self, UsageError> {
        let command = match entries.remove("command") {
            Some(e) => e.value.parse().map_err(|m| UsageError::field_at(e.line, "command", m))?,
            None => return Err(UsageError::field("command", "missing")),
        };
        let problem = match entries.remove("problem") {
            Some(e) => ProblemSource::parse(&e.value),
            None => return Err(UsageError::field("problem", "missing")),
        };
        let output_path = entries.remove("out").map(|e| PathBuf::from(e.value));
        let mut spec = RunSpec::new(command, problem);
        spec.output_path = output_path;
        for (key, e) in entries {
            if !PARAM_KEYS.contains(&key.as_str()) {
                return Err(UsageError::field_at(e.line, &key, "unknown key"));
            }
            spec.lines.insert(key.clone(), e.line);
            spec.params.insert(key, e.value);
        }
        Ok(spec)
    }

    pub fn from_spec_text(text: &str) -> Result<Self, UsageError> {
        Self::from_entries(parse_spec_text(text)?)
    }

    pub fn seed(&self) -> Result<u64, UsageError> {
        Ok(self.parsed::<u64>("seed", "a nonnegative integer")?.unwrap_or(0))
    }

    fn err(&self, key: &str, message: impl Into<String>) -> UsageError {
        UsageError { line: self.lines.get(key).copied(), field: Some(key.to_string()), message: message.into() }
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, UsageError> {
        match self.params.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| self.err(key, format!("expected {what}, got `{raw}`"))),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, UsageError> {
        let v = self.parsed::<f64>(key, "a number")?;
        match v {
            Some(x) if !x.is_finite() => Err(self.err(key, format!("must be finite, got {x}"))),
            _ => Ok(v),
        }
    }

    fn req_f64(&self, key: &str) -> Result<f64, UsageError> {
        self.f64(key)?.ok_or_else(|| self.missing(key))
    }

    fn usize(&self, key: &str) -> Result<Option<usize>, UsageError> {
        self.parsed(key, "a nonnegative integer")
    }

    fn vector(&self, key: &str) -> Result<Option<Vec<f64>>, UsageError> {
        let Some(raw) = self.params.get(key) else { return Ok(None) };
        raw.split(',')
            .map(|part| {
                let part = part.trim();
                match part.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(self.err(key, format!("expected comma-separated numbers, got `{raw}`"))),
                }
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn req_vector(&self, key: &str) -> Result<Vec<f64>, UsageError> {
        self.vector(key)?.ok_or_else(|| self.missing(key))
    }

    fn missing(&self, key: &str) -> UsageError {
        UsageError::field(key, format!("required by `{}`", self.command.name()))
    }

    fn reject_unused(&self, allowed: &[&str]) -> Result<(), UsageError> {
        for key in self.params.keys() {
            if !allowed.contains(&key.as_str()) && key != "seed" {
                return Err(self.err(key, format!("not used by `{}`", self.command.name())));
            }
        }
        Ok(())
    }
}

/// What a successful run reports on stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub summary: Value,
}

/// Executes a spec. Traces are written to `output_path` before a numerical
/// failure is reported, so a diverged run still leaves its partial trace.
pub fn run(spec: &RunSpec) -> Result<RunOutcome, RunError> {
    let seed = spec.seed()?;
    let mut summary = match spec.command {
        Command::Certify => run_certify(spec, seed)?,
        Command::Solve => run_solve(spec)?,
        Command::Simulate => run_simulate(spec)?,
        Command::Traffic => run_traffic(spec)?,
    };
    if let Value::Object(map) = &mut summary {
        map.insert("command".into(), json!(spec.command));
        map.insert("problem".into(), json!(spec.problem.to_string()));
        map.insert("seed".into(), json!(seed));
    }
    Ok(RunOutcome { summary })
}

fn load_problem(spec: &RunSpec) -> Result<IqvipProblem, RunError> {
    let mu = spec.f64("mu")?;
    let problem = match &spec.problem {
        ProblemSource::Builtin(name) if name == builtin::EXAMPLE51 => builtin::example51(),
        ProblemSource::Builtin(name) if name == builtin::FREE => {
            let dim = spec.vector("x0")?.map_or(2, |x| x.len());
            builtin::free_motion(dim)
        }
        ProblemSource::Builtin(name) => {
            return Err(UsageError::field(
                "problem",
                format!("`{name}` is a network; use it with `traffic`"),
            )
            .into())
        }
        ProblemSource::File(path) => return Ok(ProblemFile::load(path)?.build(mu)?),
    };
    match mu {
        None => Ok(problem),
        Some(mu) => {
            let rebuilt = IqvipProblem::new(problem.map().clone(), problem.family().clone(), mu)?;
            Ok(match problem.known_solution() {
                Some(s) => rebuilt.with_known_solution(s.to_vec())?,
                None => rebuilt,
            })
        }
    }
}

fn run_certify(spec: &RunSpec, seed: u64) -> Result<Value, RunError> {
    spec.reject_unused(&["mu", "sigma", "tau", "theta", "theta1", "rho_samples"])?;
    let problem = load_problem(spec)?;
    let constants = problem.constants().ok_or_else(|| {
        IqvipError::InvalidConfig("the problem declares no (L, eta); nothing to certify".into())
    })?;
    let samples = spec.usize("rho_samples")?.unwrap_or(DEFAULT_RHO_SAMPLES);
    let rho_estimate = if samples > 0 { Some(estimate_rho(problem.family().as_ref(), samples, seed)?) } else { None };
    let pair = match (spec.f64("theta")?, spec.f64("theta1")?) {
        (Some(theta), Some(theta1)) => ThetaPair { theta, theta1 },
        (None, None) => ThetaPair::from(&constants),
        (Some(_), None) => return Err(spec.err("theta1", "needed together with `theta`").into()),
        (None, Some(_)) => return Err(spec.err("theta", "needed together with `theta1`").into()),
    };
    let certificate = match (spec.f64("sigma")?, spec.f64("tau")?) {
        (Some(sigma), Some(tau)) => Some(check_discrete(pair, sigma, tau)),
        (None, None) => None,
        (Some(_), None) => return Err(spec.missing("tau").into()),
        (None, Some(_)) => return Err(spec.missing("sigma").into()),
    };
    let summary = json!({
        "constants": constants,
        "rho_estimate": rho_estimate,
        "theta_pair": {"theta": pair.theta, "theta1": pair.theta1},
        "certificate": certificate,
    });
    if let Some(path) = &spec.output_path {
        write_file(path, |w| {
            serde_json::to_writer_pretty(&mut *w, &summary)?;
            writeln!(w)?;
            Ok(())
        })?;
    }
    Ok(summary)
}

fn solver_config(spec: &RunSpec, default_max_iter: usize) -> Result<SolverConfig, RunError> {
    let variant = match spec.params.get("variant") {
        Some(v) => v.parse::<Variant>().map_err(|e| spec.err("variant", e.to_string()))?,
        None if spec.params.contains_key("h") => Variant::General,
        None => Variant::Inertial,
    };
    let tau = spec.req_f64("tau")?;
    let mut config = match variant {
        Variant::Inertial => SolverConfig::inertial(spec.req_f64("sigma")?, tau),
        Variant::FirstOrder => {
            if spec.params.contains_key("sigma") {
                return Err(spec.err("sigma", "the first-order variant fixes sigma = 1").into());
            }
            SolverConfig::first_order(tau)
        }
        Variant::General => SolverConfig::general(spec.req_f64("sigma")?, tau, spec.req_f64("h")?),
    };
    if variant != Variant::General && spec.params.contains_key("h") {
        return Err(spec.err("h", "only the general variant takes a step h").into());
    }
    config.max_iter = spec.usize("max_iter")?.unwrap_or(default_max_iter);
    config.stop_residual = spec.f64("stop_residual")?;
    config.stop_error = spec.f64("stop_error")?;
    Ok(config)
}

fn run_solve(spec: &RunSpec) -> Result<Value, RunError> {
    spec.reject_unused(&[
        "mu", "sigma", "tau", "h", "variant", "x0", "x_prev", "max_iter", "stop_residual",
        "stop_error", "tail",
    ])?;
    let problem = load_problem(spec)?;
    let config = solver_config(spec, SolverConfig::DEFAULT_MAX_ITER)?;
    let x0 = spec.req_vector("x0")?;
    let x_prev = spec.vector("x_prev")?;
    let tail = spec.f64("tail")?.unwrap_or(DEFAULT_TAIL);
    let trace = match solve(&problem, &x0, x_prev.as_deref(), &config) {
        Ok(t) => t,
        Err(IqvipError::SolverDiverged { iteration, partial }) => {
            write_output(spec, |w| trace_csv::write_iter_trace(w, &partial))?;
            return Err(IqvipError::SolverDiverged { iteration, partial }.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_output(spec, |w| trace_csv::write_iter_trace(w, &trace))?;
    Ok(solve_summary(&config, &trace, tail))
}

fn solve_summary(config: &SolverConfig, trace: &IterTrace, tail: f64) -> Value {
    let last = trace.last();
    let rate = match estimate_linear_rate(trace, tail) {
        Ok(r) => json!({"q": r.q, "r_squared": r.r_squared}),
        Err(e) => json!({"unavailable": e.to_string()}),
    };
    json!({
        "variant": config.variant,
        "sigma": config.sigma.as_constant(),
        "tau": config.tau.as_constant(),
        "h": config.step.as_constant(),
        "steps_used": trace.steps_used,
        "stop_reason": trace.stop_reason,
        "final_x": last.map(|r| r.x.clone()),
        "final_residual": last.map(|r| r.residual),
        "final_error": last.and_then(|r| r.error),
        "rate": rate,
    })
}

fn run_simulate(spec: &RunSpec) -> Result<Value, RunError> {
    spec.reject_unused(&["mu", "sigma", "tau", "x0", "v0", "horizon", "dt", "coefficients", "tail"])?;
    let problem = load_problem(spec)?;
    let sigma = spec.req_f64("sigma")?;
    let tau = spec.req_f64("tau")?;
    let mut config = DynamicsConfig::constant(sigma, tau, spec.req_vector("x0")?, spec.req_f64("horizon")?)
        .with_step(spec.f64("dt")?.unwrap_or(dynamics::DEFAULT_DT));
    if let Some(v0) = spec.vector("v0")? {
        config = config.with_velocity(v0);
    }
    match spec.params.get("coefficients").map(String::as_str) {
        None | Some("constant") => {
            config.sigma = constant(sigma);
            config.tau = constant(tau);
        }
        Some("time_varying") => {
            let (s, t) = time_varying_coefficients(sigma, tau);
            config.sigma = s;
            config.tau = t;
        }
        Some(other) => {
            return Err(spec
                .err("coefficients", format!("expected `constant` or `time_varying`, got `{other}`"))
                .into())
        }
    }
    let tail = spec.f64("tail")?.unwrap_or(DEFAULT_TAIL);
    let trace = match integrate(&problem, &config, problem.known_solution()) {
        Ok(t) => t,
        Err(IqvipError::TrajectoryDiverged { time, partial }) => {
            let residuals = trajectory_residuals(&problem, &partial);
            write_output(spec, |w| trace_csv::write_trajectory(w, &partial, &residuals))?;
            return Err(IqvipError::TrajectoryDiverged { time, partial }.into());
        }
        Err(e) => return Err(e.into()),
    };
    let residuals = trajectory_residuals(&problem, &trace);
    write_output(spec, |w| trace_csv::write_trajectory(w, &trace, &residuals))?;
    let last = trace.last();
    let rate = if trace.samples.first().is_some_and(|s| s.dist.is_some()) {
        match estimate_rate(&trace, tail) {
            Ok(r) if r.zeta.is_infinite() => json!({"exact_convergence": true}),
            Ok(r) => json!({"zeta": r.zeta, "nu": r.nu, "r_squared": r.r_squared}),
            Err(e) => json!({"unavailable": e.to_string()}),
        }
    } else {
        json!({"unavailable": "the problem has no known solution"})
    };
    Ok(json!({
        "sigma": sigma,
        "tau": tau,
        "dt": config.step,
        "horizon": config.horizon,
        "steps_used": trace.len().saturating_sub(1),
        "final_t": last.map(|s| s.t),
        "final_x": last.map(|s| s.x.clone()),
        "final_dist": last.and_then(|s| s.dist),
        "final_residual": residuals.last(),
        "rate": rate,
    }))
}

fn trajectory_residuals(problem: &IqvipProblem, trace: &TrajectoryTrace) -> Vec<f64> {
    trace.samples.iter().map(|s| problem.residual_norm(&s.x).unwrap_or(f64::NAN)).collect()
}

fn run_traffic(spec: &RunSpec) -> Result<Value, RunError> {
    spec.reject_unused(&["mu", "sigma", "tau", "variant", "max_iter", "stop_residual", "gap_tol"])?;
    let net = match &spec.problem {
        ProblemSource::Builtin(name) if name == builtin::TRAFFIC_DEMO => builtin::traffic_demo(),
        ProblemSource::Builtin(name) => {
            return Err(UsageError::field(
                "problem",
                format!("`{name}` is not a network; use `{}` or a network file", builtin::TRAFFIC_DEMO),
            )
            .into())
        }
        ProblemSource::File(path) => TrafficNetwork::load(path)?,
    };
    let mu = spec.req_f64("mu")?;
    let config = solver_config(spec, DEFAULT_TRAFFIC_ITERATIONS)?;
    let mut ue = UeParams::default();
    if let Some(g) = spec.f64("gap_tol")? {
        ue.gap_tol = g;
    }
    let run = match solve_tolls(&net, mu, &config, &ue) {
        Ok(r) => r,
        Err(IqvipError::SolverDiverged { iteration, partial }) => {
            let flows = vec![Vec::new(); partial.records.len()];
            let run = TollRun { trace: (*partial).clone(), flows };
            write_output(spec, |w| trace_csv::write_toll_run(w, &run))?;
            return Err(IqvipError::SolverDiverged { iteration, partial }.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_output(spec, |w| trace_csv::write_toll_run(w, &run))?;
    let r0 = run.trace.records.first().map(|r| r.residual);
    let last = run.trace.last();
    Ok(json!({
        "variant": config.variant,
        "sigma": config.sigma.as_constant(),
        "tau": config.tau.as_constant(),
        "mu": mu,
        "gap_tol": ue.gap_tol,
        "steps_used": run.trace.steps_used,
        "stop_reason": run.trace.stop_reason,
        "initial_residual": r0,
        "final_residual": last.map(|r| r.residual),
        "final_tolls": last.map(|r| r.x.clone()),
        "final_flows": run.flows.last(),
    }))
}

fn write_output(
    spec: &RunSpec,
    body: impl FnOnce(&mut dyn Write) -> crate::error::Result<()>,
) -> Result<(), RunError> {
    match &spec.output_path {
        Some(path) => write_file(path, body),
        None => Ok(()),
    }
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut dyn Write) -> crate::error::Result<()>,
) -> Result<(), RunError> {
    let mut w = BufWriter::new(File::create(path).map_err(IqvipError::from)?);
    body(&mut w)?;
    w.flush().map_err(IqvipError::from)?;
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "iqvip", version, about = "Inertial projection solvers for inverse quasi-variational inequalities")]
struct Args {
    /// `key = value` run file; flags override its entries.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// certify, solve, simulate or traffic.
    #[arg(long)]
    command: Option<String>,
    /// example51, free, traffic-demo, or a JSON file.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    h: Option<String>,
    /// Comma-separated start point.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Comma-separated `x_{-1}` (defaults to `x0`).
    #[arg(long, allow_hyphen_values = true)]
    x_prev: Option<String>,
    /// Comma-separated initial velocity (defaults to zero).
    #[arg(long, allow_hyphen_values = true)]
    v0: Option<String>,
    #[arg(long)]
    horizon: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    stop_residual: Option<String>,
    #[arg(long)]
    stop_error: Option<String>,
    #[arg(long)]
    max_iter: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// inertial, first_order or general.
    #[arg(long)]
    variant: Option<String>,
    /// Trailing fraction of the trace used for rate fits.
    #[arg(long)]
    tail: Option<String>,
    /// constant or time_varying (simulate).
    #[arg(long)]
    coefficients: Option<String>,
    /// Relative gap for user equilibria (traffic).
    #[arg(long)]
    gap_tol: Option<String>,
    /// Synthetic theta for certify.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    /// Synthetic theta1 for certify.
    #[arg(long, allow_hyphen_values = true)]
    theta1: Option<String>,
    /// Samples for the rho estimate in certify (0 skips it).
    #[arg(long)]
    rho_samples: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Args {
    fn flag_values(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("command", self.command.clone()),
            ("problem", self.problem.clone()),
            ("sigma", self.sigma.clone()),
            ("tau", self.tau.clone()),
            ("mu", self.mu.clone()),
            ("h", self.h.clone()),
            ("x0", self.x0.clone()),
            ("x_prev", self.x_prev.clone()),
            ("v0", self.v0.clone()),
            ("horizon", self.horizon.clone()),
            ("dt", self.dt.clone()),
            ("stop_residual", self.stop_residual.clone()),
            ("stop_error", self.stop_error.clone()),
            ("max_iter", self.max_iter.clone()),
            ("seed", self.seed.clone()),
            ("variant", self.variant.clone()),
            ("tail", self.tail.clone()),
            ("coefficients", self.coefficients.clone()),
            ("gap_tol", self.gap_tol.clone()),
            ("theta", self.theta.clone()),
            ("theta1", self.theta1.clone()),
            ("rho_samples", self.rho_samples.clone()),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
        ]
    }
}

enum Parsed {
    Spec(RunSpec),
    Exit(i32),
}

fn parse_args<I, T>(args: I) -> Parsed
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return Parsed::Exit(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let mut entries = match &args.spec {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => match parse_spec_text(&text) {
                Ok(m) => m,
                Err(e) => return usage_exit(&format!("{}: {e}", path.display())),
            },
            Err(e) => return usage_exit(&format!("cannot read {}: {e}", path.display())),
        },
        None => BTreeMap::new(),
    };
    for (key, value) in args.flag_values() {
        if let Some(value) = value {
            entries.insert(key.to_string(), Entry { value, line: 0 });
        }
    }
    match RunSpec::from_entries(entries) {
        Ok(mut spec) => {
            spec.lines.retain(|_, line| *line > 0);
            Parsed::Spec(spec)
        }
        Err(mut e) => {
            if e.line == Some(0) {
                e.line = None;
            }
            usage_exit(&e.to_string())
        }
    }
}

fn usage_exit(message: &str) -> Parsed {
    eprintln!("error: {message}");
    Parsed::Exit(EXIT_USAGE)
}

/// Runs the CLI on `args` (program name first) and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("IQVIP_LOG")).try_init();
    let spec = match parse_args(args) {
        Parsed::Spec(s) => s,
        Parsed::Exit(code) => return code,
    };
    match run(&spec) {
        Ok(outcome) => {
            let text = match serde_json::to_string_pretty(&outcome.summary) {
                Ok(text) => text,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            };
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    eprintln!("error: {e}");
                    EXIT_USAGE
                }
                _ => EXIT_OK,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
