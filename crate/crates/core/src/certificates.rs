//! Convergence constants and the parameter conditions that certify the
//! continuous-time flow and the discrete inertial scheme.

use std::sync::Arc;

use serde::Serialize;

use crate::dynamics::TimeFn;
use crate::error::{IqvipError, Result};

/// Slack of the finite-difference sign test for the monotonicity conditions.
pub const SLOPE_TOL: f64 = 1e-9;

/// Constants derived from `(L, eta, rho, mu)`.
///
/// * `theta = eta - rho - 1/2 - L²/2 - mu²/2 + mu*eta`
/// * `theta1 = theta / (2L + rho + mu)²`
/// * `existence_margin = mu - sqrt(L² - 2 eta mu + mu²) - rho`
///
/// `theta > 0` drives both convergence results; a positive margin gives a
/// unique solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertifiedConstants {
    pub lipschitz: f64,
    pub eta: f64,
    pub rho: f64,
    pub mu: f64,
    pub theta: f64,
    pub theta1: f64,
    pub existence_margin: f64,
}

impl CertifiedConstants {
    /// Lipschitz modulus `2L + rho + mu` of the natural map.
    pub fn natural_map_lipschitz(&self) -> f64 {
        2.0 * self.lipschitz + self.rho + self.mu
    }

    pub fn has_unique_solution(&self) -> bool {
        self.existence_margin > 0.0
    }

    /// Both `theta > 0` and a positive existence margin.
    pub fn is_certified(&self) -> bool {
        self.theta > 0.0 && self.has_unique_solution()
    }
}

pub fn compute_constants(lipschitz: f64, eta: f64, rho: f64, mu: f64) -> Result<CertifiedConstants> {
    let all = [lipschitz, eta, rho, mu];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(IqvipError::InvalidConstants("constants must be finite".into()));
    }
    if !(eta > 0.0) || eta > lipschitz {
        return Err(IqvipError::InvalidConstants(format!(
            "need 0 < eta <= L, got L = {lipschitz}, eta = {eta}"
        )));
    }
    if !(mu > 0.0) {
        return Err(IqvipError::InvalidConstants(format!("mu must be positive, got {mu}")));
    }
    if rho < 0.0 {
        return Err(IqvipError::InvalidConstants(format!("rho must be nonnegative, got {rho}")));
    }
    let theta = eta - rho - 0.5 - 0.5 * lipschitz * lipschitz - 0.5 * mu * mu + mu * eta;
    let l1 = 2.0 * lipschitz + rho + mu;
    let theta1 = theta / (l1 * l1);
    // L² - 2 eta mu + mu² >= (L - mu)² when eta <= L; clamp the rounding.
    let disc = (lipschitz * lipschitz - 2.0 * eta * mu + mu * mu).max(0.0);
    let existence_margin = mu - disc.sqrt() - rho;
    Ok(CertifiedConstants { lipschitz, eta, rho, mu, theta, theta1, existence_margin })
}

/// The pair `(theta, theta1)` the parameter conditions depend on.
///
/// Usually taken from [`CertifiedConstants`]; building one directly allows
/// checking the conditions against rescaled or synthetic constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaPair {
    pub theta: f64,
    pub theta1: f64,
}

impl From<CertifiedConstants> for ThetaPair {
    fn from(c: CertifiedConstants) -> Self {
        Self { theta: c.theta, theta1: c.theta1 }
    }
}

impl From<&CertifiedConstants> for ThetaPair {
    fn from(c: &CertifiedConstants) -> Self {
        Self::from(*c)
    }
}

/// Step-size bound `theta1 * min{(1 - sigma)/4, sigma²/(4 - sigma)}` of the
/// discrete scheme. Admissible `tau` lie strictly below it.
pub fn tau_max(theta1: f64, sigma: f64) -> f64 {
    theta1 * ((1.0 - sigma) / 4.0).min(sigma * sigma / (4.0 - sigma))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepCertificate {
    pub sigma: f64,
    pub tau: f64,
    pub tau_max: f64,
    pub discrete_ok: bool,
    pub continuous_ok: bool,
    /// Why `discrete_ok` is false, if it is.
    pub reason: Option<String>,
}

/// Checks `0 < sigma < 1` and `0 < tau < tau_max(theta1, sigma)`.
pub fn check_discrete(constants: impl Into<ThetaPair>, sigma: f64, tau: f64) -> StepCertificate {
    let c = constants.into();
    let bound = tau_max(c.theta1, sigma);
    let reason = if !(c.theta > 0.0) {
        Some(format!("theta = {} is not positive", c.theta))
    } else if !(sigma > 0.0 && sigma < 1.0) {
        Some(format!("sigma = {sigma} is outside (0, 1)"))
    } else if !(tau > 0.0) {
        Some(format!("tau = {tau} is not positive"))
    } else if !(tau < bound) {
        Some(format!("tau = {tau} is not below tau_max = {bound}"))
    } else {
        None
    };
    StepCertificate {
        sigma,
        tau,
        tau_max: bound,
        discrete_ok: reason.is_none(),
        continuous_ok: check_continuous(c, sigma, tau).unwrap_or(false),
        reason,
    }
}

/// Closed interval of damping values admitted for a constant relaxation
/// `tau`: `[1/2 + sqrt(1 + 8 tau / theta1)/2, theta² theta1 (tau - 1)]`.
/// It may be empty.
pub fn continuous_sigma_interval(constants: impl Into<ThetaPair>, tau: f64) -> (f64, f64) {
    let c = constants.into();
    let lo = 0.5 + 0.5 * (1.0 + 8.0 * tau / c.theta1).sqrt();
    let hi = c.theta * c.theta * c.theta1 * (tau - 1.0);
    (lo, hi)
}

/// Whether constant `(sigma, tau)` lie in [`continuous_sigma_interval`],
/// which is sufficient for exponential convergence of the flow.
pub fn check_continuous(constants: impl Into<ThetaPair>, sigma: f64, tau: f64) -> Result<bool> {
    let c = constants.into();
    if !(tau > 1.0) {
        return Err(IqvipError::OutOfDomain(format!("tau must exceed 1, got {tau}")));
    }
    if !(c.theta > 0.0) || !(c.theta1 > 0.0) {
        return Ok(false);
    }
    let (lo, hi) = continuous_sigma_interval(c, tau);
    Ok(lo <= sigma && sigma <= hi)
}

/// `t ↦ sigma + 1/(t+1)` and `t ↦ tau - 1/(t+1)`, for `sigma, tau > 1`.
pub fn time_varying_coefficients(sigma: f64, tau: f64) -> (TimeFn, TimeFn) {
    (
        Arc::new(move |t: f64| sigma + 1.0 / (t + 1.0)),
        Arc::new(move |t: f64| tau - 1.0 / (t + 1.0)),
    )
}

/// Grid check of the three conditions on time-varying coefficients:
///
/// 1. `1 < min σ <= σ(t) <= θ²θ₁τ(t) + 1`,
/// 2. `σ` and `σ/τ` nonincreasing (finite differences, slack [`SLOPE_TOL`]),
/// 3. `σ(t)² - σ(t) - 2τ(t)/θ₁ >= 0`.
pub fn check_conditions_i_iii(
    constants: impl Into<ThetaPair>,
    sigma: &dyn Fn(f64) -> f64,
    tau: &dyn Fn(f64) -> f64,
    t_grid: &[f64],
) -> bool {
    let c = constants.into();
    if t_grid.is_empty() || !(c.theta1 > 0.0) {
        return false;
    }
    let s: Vec<f64> = t_grid.iter().map(|&t| sigma(t)).collect();
    let r: Vec<f64> = t_grid.iter().map(|&t| tau(t)).collect();
    if s.iter().chain(&r).any(|v| !v.is_finite()) {
        return false;
    }
    let floor = s.iter().copied().fold(f64::INFINITY, f64::min);
    if !(floor > 1.0) {
        return false;
    }
    let scale = c.theta * c.theta * c.theta1;
    for (&si, &ti) in s.iter().zip(&r) {
        if si > scale * ti + 1.0 {
            return false;
        }
        if si * si - si - 2.0 * ti / c.theta1 < 0.0 {
            return false;
        }
    }
    for k in 1..t_grid.len() {
        let dt = t_grid[k] - t_grid[k - 1];
        if !(dt > 0.0) {
            return false;
        }
        if (s[k] - s[k - 1]) / dt > SLOPE_TOL {
            return false;
        }
        if (s[k] / r[k] - s[k - 1] / r[k - 1]) / dt > SLOPE_TOL {
            return false;
        }
    }
    true
}
