//! Second-order flow `x'' + σ(t) x' + τ(t) B(x) = 0`, integrated as the
//! first-order system `(x, v)' = (v, -τ(t) B(x) - σ(t) v)` with fixed-step RK4.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, check_finite, IqvipError, Result};
use crate::fit::{fit_tail, TailFit};
use crate::linalg;
use crate::problem::IqvipProblem;

pub const DEFAULT_DT: f64 = 1e-3;

/// Magnitude beyond which a state counts as blown up.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Time-dependent coefficient `t ↦ value`.
pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub fn constant(value: f64) -> TimeFn {
    Arc::new(move |_| value)
}

#[derive(Clone)]
pub struct DynamicsConfig {
    pub sigma: TimeFn,
    pub tau: TimeFn,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub step: f64,
    pub horizon: f64,
}

impl fmt::Debug for DynamicsConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DynamicsConfig")
            .field("x0", &self.x0)
            .field("v0", &self.v0)
            .field("step", &self.step)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl DynamicsConfig {
    /// Constant coefficients, zero initial velocity, default step.
    pub fn constant(sigma: f64, tau: f64, x0: Vec<f64>, horizon: f64) -> Self {
        let n = x0.len();
        Self {
            sigma: constant(sigma),
            tau: constant(tau),
            x0,
            v0: vec![0.0; n],
            step: DEFAULT_DT,
            horizon,
        }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_velocity(mut self, v0: Vec<f64>) -> Self {
        self.v0 = v0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.x0.len(), self.v0.len())?;
        check_finite(&self.x0, "initial position")?;
        check_finite(&self.v0, "initial velocity")?;
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(IqvipError::InvalidConfig(format!("step must be positive, got {}", self.step)));
        }
        if !(self.horizon >= self.step) || !self.horizon.is_finite() {
            return Err(IqvipError::InvalidConfig(format!(
                "horizon {} must be at least the step {}",
                self.horizon, self.step
            )));
        }
        for t in [0.0, 0.5 * self.horizon, self.horizon] {
            if !(self.sigma)(t).is_finite() || !(self.tau)(t).is_finite() {
                return Err(IqvipError::InvalidConfig(format!(
                    "coefficients are not finite at t = {t}"
                )));
            }
        }
        Ok(())
    }

    /// Number of RK4 steps; the last one is shortened to land on the horizon.
    pub fn step_count(&self) -> usize {
        let n = self.horizon / self.step;
        let rounded = n.round();
        if (n - rounded).abs() < 1e-9 * n.max(1.0) {
            rounded as usize
        } else {
            n.ceil() as usize
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// `‖x(t) - x*‖`, present when a reference solution was supplied.
    pub dist: Option<f64>,
    /// `½‖x(t) - x*‖²`
    pub half_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryTrace {
    pub samples: Vec<TrajectorySample>,
}

impl TrajectoryTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }
}

/// `(v, -τ(t) B(x) - σ(t) v)`.
pub fn vector_field(
    problem: &IqvipProblem,
    sigma: &dyn Fn(f64) -> f64,
    tau: &dyn Fn(f64) -> f64,
    t: f64,
    x: &[f64],
    v: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim(x.len(), v.len())?;
    let b = problem.natural_map(x)?;
    let (s, r) = (sigma(t), tau(t));
    let accel = b.iter().zip(v).map(|(bi, vi)| -r * bi - s * vi).collect();
    Ok((v.to_vec(), accel))
}

fn sample(t: f64, x: Vec<f64>, v: Vec<f64>, x_star: Option<&[f64]>) -> TrajectorySample {
    let (dist, half_sq) = match x_star {
        Some(s) => {
            let sq = linalg::norm_sq(&linalg::sub(&x, s));
            (Some(sq.sqrt()), Some(0.5 * sq))
        }
        None => (None, None),
    };
    TrajectorySample { t, x, v, dist, half_sq }
}

fn blown_up(x: &[f64], v: &[f64]) -> bool {
    x.iter()
        .chain(v)
        .any(|c| !c.is_finite() || c.abs() > DIVERGENCE_LIMIT)
}

/// Fixed-step classical RK4 from `t = 0` to the horizon, recording every step.
/// Coefficients are evaluated at the stage times.
pub fn integrate(
    problem: &IqvipProblem,
    config: &DynamicsConfig,
    x_star: Option<&[f64]>,
) -> Result<TrajectoryTrace> {
    config.validate()?;
    check_dim(problem.dim(), config.x0.len())?;
    if let Some(s) = x_star {
        check_dim(problem.dim(), s.len())?;
    }
    let sigma = &*config.sigma;
    let tau = &*config.tau;
    let steps = config.step_count();

    let mut trace = TrajectoryTrace { samples: Vec::with_capacity(steps + 1) };
    let mut x = config.x0.clone();
    let mut v = config.v0.clone();
    trace.samples.push(sample(0.0, x.clone(), v.clone(), x_star));

    for k in 0..steps {
        let t = k as f64 * config.step;
        let t_next = if k + 1 == steps { config.horizon } else { (k + 1) as f64 * config.step };
        let h = t_next - t;
        let half = 0.5 * h;

        let (k1x, k1v) = vector_field(problem, sigma, tau, t, &x, &v)?;
        let (k2x, k2v) = vector_field(
            problem,
            sigma,
            tau,
            t + half,
            &linalg::axpy(&x, half, &k1x),
            &linalg::axpy(&v, half, &k1v),
        )?;
        let (k3x, k3v) = vector_field(
            problem,
            sigma,
            tau,
            t + half,
            &linalg::axpy(&x, half, &k2x),
            &linalg::axpy(&v, half, &k2v),
        )?;
        let (k4x, k4v) = vector_field(
            problem,
            sigma,
            tau,
            t_next,
            &linalg::axpy(&x, h, &k3x),
            &linalg::axpy(&v, h, &k3v),
        )?;
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
            v[i] += h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
        if blown_up(&x, &v) {
            return Err(IqvipError::TrajectoryDiverged { time: t_next, partial: Box::new(trace) });
        }
        trace.samples.push(sample(t_next, x.clone(), v.clone(), x_star));
    }
    Ok(trace)
}

/// Fitted `‖x(t) - x*‖ ≈ ν ‖x(0) - x*‖ e^{-ζ t}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub nu: f64,
    /// Decay rate; `+∞` when the tail is exactly at the solution.
    pub zeta: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `ln dist` against `t` over the trailing
/// `tail_fraction` of the trace.
pub fn estimate_rate(trace: &TrajectoryTrace, tail_fraction: f64) -> Result<RateEstimate> {
    let mut ts = Vec::with_capacity(trace.len());
    let mut ds = Vec::with_capacity(trace.len());
    for s in &trace.samples {
        let d = s.dist.ok_or_else(|| {
            IqvipError::InvalidArgument("trace has no distance-to-solution samples".into())
        })?;
        ts.push(s.t);
        ds.push(d);
    }
    let d0 = ds.first().copied().unwrap_or(0.0);
    match fit_tail(&ts, &ds, tail_fraction)? {
        TailFit::ExactConvergence => Ok(RateEstimate { nu: 0.0, zeta: f64::INFINITY, r_squared: 1.0 }),
        TailFit::Fit(f) => {
            let nu = if d0 > 0.0 { f.intercept.exp() / d0 } else { f64::NAN };
            Ok(RateEstimate { nu, zeta: -f.slope, r_squared: f.r_squared })
        }
    }
}
