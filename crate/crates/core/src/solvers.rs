//! Discretized schemes for the second-order flow.
//!
//! * general: `x+ = x + (1 - σ h)(x - x⁻) + τ h² (P_{ψ(x)}(V(x) - μx) - V(x))`
//! * inertial (`h = 1`): `y = x + (1 - σ)(x - x⁻)`, `x+ = y + τ (P - V)`
//! * first order (`σ = 1`): `x+ = x + τ (P - V)`
//!
//! Note `P - V = -B`, so every step moves against the natural map.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::DIVERGENCE_LIMIT;
use crate::error::{check_dim, check_finite, IqvipError, Result};
use crate::fit::{fit_tail, TailFit};
use crate::linalg;
use crate::problem::IqvipProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    General,
    Inertial,
    FirstOrder,
}

impl std::str::FromStr for Variant {
    type Err = IqvipError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" => Ok(Variant::General),
            "inertial" => Ok(Variant::Inertial),
            "first_order" | "first-order" => Ok(Variant::FirstOrder),
            other => Err(IqvipError::InvalidConfig(format!("unknown variant `{other}`"))),
        }
    }
}

/// A constant parameter or a schedule indexed by iteration `n`.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    Schedule(Arc<dyn Fn(usize) -> f64 + Send + Sync>),
}

impl Coefficient {
    pub fn at(&self, n: usize) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Schedule(f) => f(n),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Coefficient::Constant(c) => Some(*c),
            Coefficient::Schedule(_) => None,
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "{c}"),
            Coefficient::Schedule(_) => f.write_str("<schedule>"),
        }
    }
}

impl From<f64> for Coefficient {
    fn from(c: f64) -> Self {
        Coefficient::Constant(c)
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub variant: Variant,
    pub sigma: Coefficient,
    pub tau: Coefficient,
    /// Step `h`; only the general variant reads it.
    pub step: Coefficient,
    pub max_iter: usize,
    pub stop_residual: Option<f64>,
    /// Stop once `‖x_n - x*‖` falls to this value; needs a known solution.
    pub stop_error: Option<f64>,
}

impl SolverConfig {
    pub const DEFAULT_MAX_ITER: usize = 100_000;

    pub fn inertial(sigma: f64, tau: f64) -> Self {
        Self {
            variant: Variant::Inertial,
            sigma: sigma.into(),
            tau: tau.into(),
            step: 1.0.into(),
            max_iter: Self::DEFAULT_MAX_ITER,
            stop_residual: None,
            stop_error: None,
        }
    }

    pub fn first_order(tau: f64) -> Self {
        Self { variant: Variant::FirstOrder, sigma: 1.0.into(), ..Self::inertial(1.0, tau) }
    }

    pub fn general(
        sigma: impl Into<Coefficient>,
        tau: impl Into<Coefficient>,
        step: impl Into<Coefficient>,
    ) -> Self {
        Self {
            variant: Variant::General,
            sigma: sigma.into(),
            tau: tau.into(),
            step: step.into(),
            ..Self::inertial(1.0, 0.0)
        }
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn stop_on_residual(mut self, tol: f64) -> Self {
        self.stop_residual = Some(tol);
        self
    }

    pub fn stop_on_error(mut self, tol: f64) -> Self {
        self.stop_error = Some(tol);
        self
    }

    pub fn validate(&self, problem: &IqvipProblem) -> Result<()> {
        if self.max_iter == 0 {
            return Err(IqvipError::InvalidConfig("max_iter must be positive".into()));
        }
        for (name, tol) in [("stop_residual", self.stop_residual), ("stop_error", self.stop_error)] {
            if let Some(t) = tol {
                if !(t > 0.0) {
                    return Err(IqvipError::InvalidConfig(format!("{name} must be positive, got {t}")));
                }
            }
        }
        if self.stop_error.is_some() && problem.known_solution().is_none() {
            return Err(IqvipError::InvalidConfig(
                "stop_error needs a problem with a known solution".into(),
            ));
        }
        match self.variant {
            Variant::General => {}
            Variant::Inertial | Variant::FirstOrder => {
                let (Some(_), Some(tau), Some(h)) =
                    (self.sigma.as_constant(), self.tau.as_constant(), self.step.as_constant())
                else {
                    return Err(IqvipError::InvalidConfig(
                        "inertial and first-order variants take constant parameters".into(),
                    ));
                };
                if h != 1.0 {
                    return Err(IqvipError::InvalidConfig(format!(
                        "inertial and first-order variants use h = 1, got {h}"
                    )));
                }
                if !(tau > 0.0) {
                    return Err(IqvipError::InvalidConfig(format!("tau must be positive, got {tau}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub n: usize,
    pub x: Vec<f64>,
    /// `‖B(x_n)‖`
    pub residual: f64,
    /// `‖x_n - x*‖`, when the solution is known.
    pub error: Option<f64>,
}

impl IterRecord {
    /// `v_n = ‖x_n - x*‖²`
    pub fn v(&self) -> Option<f64> {
        self.error.map(|e| e * e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Residual,
    Error,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterTrace {
    pub records: Vec<IterRecord>,
    pub stop_reason: StopReason,
    pub steps_used: usize,
}

impl IterTrace {
    pub fn last(&self) -> Option<&IterRecord> {
        self.records.last()
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.residual).collect()
    }

    pub fn errors(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.error).collect()
    }
}

fn combine(x_n: &[f64], x_prev: &[f64], inertia: f64, gain: f64, b: &[f64]) -> Vec<f64> {
    x_n.iter()
        .zip(x_prev)
        .zip(b)
        .map(|((&x, &xp), &bi)| x + inertia * (x - xp) - gain * bi)
        .collect()
}

fn check_pair(problem: &IqvipProblem, x_n: &[f64], x_prev: &[f64]) -> Result<()> {
    check_dim(problem.dim(), x_n.len())?;
    check_dim(problem.dim(), x_prev.len())
}

pub fn step_general(
    problem: &IqvipProblem,
    x_n: &[f64],
    x_prev: &[f64],
    h: f64,
    sigma: f64,
    tau: f64,
) -> Result<Vec<f64>> {
    check_pair(problem, x_n, x_prev)?;
    let b = problem.natural_map(x_n)?;
    Ok(combine(x_n, x_prev, 1.0 - sigma * h, tau * h * h, &b))
}

pub fn step_inertial(
    problem: &IqvipProblem,
    x_n: &[f64],
    x_prev: &[f64],
    sigma: f64,
    tau: f64,
) -> Result<Vec<f64>> {
    check_pair(problem, x_n, x_prev)?;
    let b = problem.natural_map(x_n)?;
    Ok(combine(x_n, x_prev, 1.0 - sigma, tau, &b))
}

pub fn step_first_order(problem: &IqvipProblem, x_n: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_dim(problem.dim(), x_n.len())?;
    let b = problem.natural_map(x_n)?;
    Ok(combine(x_n, x_n, 0.0, tau, &b))
}

/// Runs the configured scheme from `x0` (and `x_{-1}`, default `x0`) until a
/// stopping rule fires. Rules are checked at each iterate before stepping, in
/// the order error, residual, iteration budget.
pub fn solve(
    problem: &IqvipProblem,
    x0: &[f64],
    x_minus1: Option<&[f64]>,
    config: &SolverConfig,
) -> Result<IterTrace> {
    config.validate(problem)?;
    check_dim(problem.dim(), x0.len())?;
    check_finite(x0, "x0")?;
    let x_minus1 = x_minus1.unwrap_or(x0);
    check_dim(problem.dim(), x_minus1.len())?;
    check_finite(x_minus1, "x_-1")?;

    let x_star = problem.known_solution();
    let mut records: Vec<IterRecord> = Vec::new();
    let mut prev = x_minus1.to_vec();
    let mut x = x0.to_vec();
    let mut n = 0;
    loop {
        let b = problem.natural_map(&x)?;
        let residual = linalg::norm(&b);
        let error = x_star.map(|s| linalg::dist(&x, s));
        records.push(IterRecord { n, x: x.clone(), residual, error });

        let stop = if matches!((config.stop_error, error), (Some(t), Some(e)) if e <= t) {
            Some(StopReason::Error)
        } else if matches!(config.stop_residual, Some(t) if residual <= t) {
            Some(StopReason::Residual)
        } else if n >= config.max_iter {
            Some(StopReason::MaxIter)
        } else {
            None
        };
        if let Some(stop_reason) = stop {
            log::debug!("solve stopped at n = {n} ({stop_reason:?}), residual {residual:e}");
            return Ok(IterTrace { records, stop_reason, steps_used: n });
        }

        let next = match config.variant {
            Variant::General => {
                let h = config.step.at(n);
                combine(&x, &prev, 1.0 - config.sigma.at(n) * h, config.tau.at(n) * h * h, &b)
            }
            Variant::Inertial => combine(&x, &prev, 1.0 - config.sigma.at(n), config.tau.at(n), &b),
            Variant::FirstOrder => combine(&x, &x, 0.0, config.tau.at(n), &b),
        };
        if next.iter().any(|c| !c.is_finite() || c.abs() > DIVERGENCE_LIMIT) {
            let steps_used = n;
            return Err(IqvipError::SolverDiverged {
                iteration: n + 1,
                partial: Box::new(IterTrace { records, stop_reason: StopReason::MaxIter, steps_used }),
            });
        }
        prev = std::mem::replace(&mut x, next);
        n += 1;
    }
}

/// Runs independent configurations in parallel. Results come back in the
/// order of `configs`.
pub fn sweep(
    problem: &IqvipProblem,
    x0: &[f64],
    configs: &[SolverConfig],
) -> Vec<Result<IterTrace>> {
    configs
        .par_iter()
        .map(|cfg| solve(problem, x0, None, cfg))
        .collect()
}

/// Fitted `e_n ≈ C q^n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearRate {
    /// Per-iteration contraction factor; `0` for exact convergence.
    pub q: f64,
    pub r_squared: f64,
}

/// Fits `ln e_n` against `n` over the trailing `tail_fraction` of the trace,
/// using `‖x_n - x*‖` when known and the residual otherwise.
pub fn estimate_linear_rate(trace: &IterTrace, tail_fraction: f64) -> Result<LinearRate> {
    let ns: Vec<f64> = trace.records.iter().map(|r| r.n as f64).collect();
    let es = trace.errors().unwrap_or_else(|| trace.residuals());
    match fit_tail(&ns, &es, tail_fraction)? {
        TailFit::ExactConvergence => Ok(LinearRate { q: 0.0, r_squared: 1.0 }),
        TailFit::Fit(f) => Ok(LinearRate { q: f.slope.exp(), r_squared: f.r_squared }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    #[test]
    fn general_with_unit_step_is_inertial() {
        let p = builtin::example51();
        let (x, xp) = ([3.0, -1.5], [2.5, -1.0]);
        let a = step_general(&p, &x, &xp, 1.0, 0.59, 0.01).unwrap();
        let b = step_inertial(&p, &x, &xp, 0.59, 0.01).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fixed_point_is_kept() {
        let p = builtin::example51();
        let z = [0.0, 0.0];
        assert_eq!(step_general(&p, &z, &z, 0.3, 2.0, 5.0).unwrap(), z);
        assert_eq!(step_inertial(&p, &z, &z, 0.59, 0.1).unwrap(), z);
        assert_eq!(step_first_order(&p, &z, 0.1).unwrap(), z);
    }

    #[test]
    fn zero_parameters_extrapolate() {
        let p = builtin::example51();
        let out = step_general(&p, &[1.0, 2.0], &[0.5, 3.0], 1.0, 0.0, 0.0).unwrap();
        assert_eq!(out, vec![1.5, 1.0]);
    }

    #[test]
    fn inertial_with_unit_sigma_is_first_order() {
        let p = builtin::example51();
        let a = step_inertial(&p, &[3.0, 4.0], &[-1.0, 8.0], 1.0, 0.02).unwrap();
        let b = step_first_order(&p, &[3.0, 4.0], 0.02).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn example_single_steps() {
        let p = builtin::example51();
        let tau = 0.000146;
        let expected: [f64; 2] = [7.0 - tau * 14.0, 5.0 - tau * 15.625];
        assert!((expected[0] - 6.997956).abs() < 1e-12);
        assert!((expected[1] - 4.99771875).abs() < 1e-12);
        let a = step_inertial(&p, &[7.0, 5.0], &[7.0, 5.0], 0.59, tau).unwrap();
        let b = step_first_order(&p, &[7.0, 5.0], tau).unwrap();
        for out in [a, b] {
            assert!((out[0] - expected[0]).abs() < 1e-12 && (out[1] - expected[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_tau_leaves_iterate() {
        let p = builtin::example51();
        assert_eq!(step_first_order(&p, &[7.0, 5.0], 0.0).unwrap(), vec![7.0, 5.0]);
    }

    #[test]
    fn start_at_solution_stops_immediately() {
        let p = builtin::example51();
        let cfg = SolverConfig::inertial(0.59, 0.000146).stop_on_error(0.1);
        let trace = solve(&p, &[0.0, 0.0], None, &cfg).unwrap();
        assert_eq!(trace.steps_used, 0);
        assert_eq!(trace.stop_reason, StopReason::Error);
        assert_eq!(trace.records.len(), 1);
    }

    #[test]
    fn max_iter_stops() {
        let p = builtin::example51();
        let cfg = SolverConfig::inertial(0.59, 0.000146).with_max_iter(25).stop_on_residual(1e-30);
        let trace = solve(&p, &[7.0, 5.0], None, &cfg).unwrap();
        assert_eq!(trace.stop_reason, StopReason::MaxIter);
        assert_eq!(trace.steps_used, 25);
        assert_eq!(trace.records.len(), 26);
        for (k, r) in trace.records.iter().enumerate() {
            assert_eq!(r.n, k);
            assert_eq!(r.residual, p.residual_norm(&r.x).unwrap());
        }
    }

    #[test]
    fn stop_error_requires_known_solution() {
        let p = builtin::free_motion(2);
        let cfg = SolverConfig::first_order(0.1).stop_on_error(0.1);
        assert!(matches!(solve(&p, &[1.0, 1.0], None, &cfg), Err(IqvipError::InvalidConfig(_))));
    }

    #[test]
    fn schedules_rejected_for_inertial() {
        let p = builtin::example51();
        let mut cfg = SolverConfig::inertial(0.5, 0.001).stop_on_residual(1e-3);
        cfg.tau = Coefficient::Schedule(Arc::new(|n| 1.0 / (n + 1) as f64));
        assert!(solve(&p, &[1.0, 1.0], None, &cfg).is_err());
    }

    #[test]
    fn divergence_keeps_partial_trace() {
        let p = builtin::example51();
        let cfg = SolverConfig::first_order(5.0).stop_on_residual(1e-12);
        match solve(&p, &[7.0, 5.0], None, &cfg).unwrap_err() {
            IqvipError::SolverDiverged { iteration, partial } => {
                assert_eq!(partial.records.len(), iteration);
                assert!(partial.records.iter().all(|r| r.x.iter().all(|c| c.is_finite())));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn geometric(e: impl Fn(usize) -> f64, n: usize) -> IterTrace {
        IterTrace {
            records: (0..n)
                .map(|k| IterRecord { n: k, x: vec![e(k)], residual: e(k), error: Some(e(k)) })
                .collect(),
            stop_reason: StopReason::MaxIter,
            steps_used: n - 1,
        }
    }

    #[test]
    fn linear_rate_of_geometric_sequence() {
        let r = estimate_linear_rate(&geometric(|k| 4.0 * 0.9f64.powi(k as i32), 100), 0.5).unwrap();
        assert!((r.q - 0.9).abs() < 1e-12);
        assert!((r.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_rate_of_constant_sequence() {
        let r = estimate_linear_rate(&geometric(|_| 3.0, 40), 1.0).unwrap();
        assert_eq!(r.q, 1.0);
    }

    #[test]
    fn sweep_preserves_order() {
        let p = builtin::example51();
        let cfgs: Vec<_> = [0.3, 0.59, 0.9]
            .iter()
            .map(|&s| SolverConfig::inertial(s, 0.000146).with_max_iter(300).stop_on_error(1e-9))
            .collect();
        let out = sweep(&p, &[7.0, 5.0], &cfgs);
        for (cfg, res) in cfgs.iter().zip(out) {
            let expected = solve(&p, &[7.0, 5.0], None, cfg).unwrap();
            assert_eq!(res.unwrap(), expected);
        }
    }
}
