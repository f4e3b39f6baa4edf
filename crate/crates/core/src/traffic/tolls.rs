//! Toll setting as an IQVIP.
//!
//! The planner wants equilibrium flows `V(x)` on the controlled links inside
//! the corridor `psi(x) = [lo + x, hi + x]` and asks for tolls `x*` with
//! `V(x*) ∈ psi(x*)` and `(z - V(x*))ᵀ x* <= 0` for `z ∈ psi(x*)`. With
//! `W = -V` this is the standard form `W(x*) ∈ -psi(x*)`,
//! `(z - W(x*))ᵀ x* >= 0` on `-psi(x*)`, which is what the solvers see.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::assignment::{user_equilibrium, UeParams};
use super::network::TrafficNetwork;
use crate::error::{check_dim, IqvipError, Result};
use crate::linalg;
use crate::problem::{ForwardMap, IqvipProblem};
use crate::projections::{BoxSet, MovingSet};
use crate::solvers::{solve, IterTrace, SolverConfig};

const CACHE_LIMIT: usize = 4096;

/// Equilibrium flows on the controlled links, in `controlled` order.
pub fn flow_map(net: &TrafficNetwork, tolls: &[f64], ue: &UeParams) -> Result<Vec<f64>> {
    let res = user_equilibrium(net, tolls, ue)?;
    Ok(net.controlled.iter().map(|c| res.link_flows[c.link]).collect())
}

/// `‖P_{psi(x)}(V(x) + mu x) - V(x)‖` with `psi(x)_i = [lo_i + x_i, hi_i + x_i]`.
pub fn traffic_residual(net: &TrafficNetwork, tolls: &[f64], flows: &[f64], mu: f64) -> Result<f64> {
    check_dim(net.controlled_count(), tolls.len())?;
    check_dim(net.controlled_count(), flows.len())?;
    Ok(net
        .controlled
        .iter()
        .zip(tolls.iter().zip(flows))
        .map(|(c, (&x, &v))| {
            let p = (v + mu * x).max(c.lo + x).min(c.hi + x);
            (p - v) * (p - v)
        })
        .sum::<f64>()
        .sqrt())
}

/// `W(x) = -V(x)`, memoizing equilibrium solves by toll vector.
pub struct NegatedFlowMap {
    net: Arc<TrafficNetwork>,
    ue: UeParams,
    cache: Mutex<HashMap<Vec<u64>, Vec<f64>>>,
}

impl NegatedFlowMap {
    pub fn new(net: Arc<TrafficNetwork>, ue: UeParams) -> Self {
        Self { net, ue, cache: Mutex::new(HashMap::new()) }
    }

    /// `V(x)`, the controlled-link flows.
    pub fn flows(&self, tolls: &[f64]) -> Result<Vec<f64>> {
        let key: Vec<u64> = tolls.iter().map(|t| t.to_bits()).collect();
        if let Some(v) = self.cache.lock().expect("flow cache poisoned").get(&key) {
            return Ok(v.clone());
        }
        let v = flow_map(&self.net, tolls, &self.ue)?;
        let mut cache = self.cache.lock().expect("flow cache poisoned");
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, v.clone());
        Ok(v)
    }
}

impl ForwardMap for NegatedFlowMap {
    fn dim(&self) -> usize {
        self.net.controlled_count()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(linalg::scale(&self.flows(x)?, -1.0))
    }
}

/// The toll problem in standard form, plus a handle on its flow map.
pub struct TollProblem {
    pub problem: IqvipProblem,
    pub flows: Arc<NegatedFlowMap>,
}

/// Builds the standard-form problem: map `-V`, constraint
/// `-psi(x) = [-hi, -lo] - x`. Its natural-map norm equals the traffic residual.
pub fn toll_problem(net: Arc<TrafficNetwork>, mu: f64, ue: UeParams) -> Result<TollProblem> {
    if net.controlled.is_empty() {
        return Err(IqvipError::InvalidConfig("network has no controlled links".into()));
    }
    let lower: Vec<f64> = net.controlled.iter().map(|c| -c.hi).collect();
    let upper: Vec<f64> = net.controlled.iter().map(|c| -c.lo).collect();
    let family = MovingSet::linear(Arc::new(BoxSet::new(lower, upper)?), -1.0)?;
    let flows = Arc::new(NegatedFlowMap::new(net, ue));
    let problem = IqvipProblem::new(flows.clone(), Arc::new(family), mu)?;
    Ok(TollProblem { problem, flows })
}

/// A toll iteration: the solver trace plus controlled flows at every iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct TollRun {
    pub trace: IterTrace,
    pub flows: Vec<Vec<f64>>,
}

/// Runs the configured scheme from zero tolls. Trace residuals are the
/// traffic residual `r_n`.
///
/// The equilibrium gap must be at least 100 times tighter than a residual
/// stopping tolerance, so that flow noise cannot fake convergence.
pub fn solve_tolls(
    net: &TrafficNetwork,
    mu: f64,
    config: &SolverConfig,
    ue: &UeParams,
) -> Result<TollRun> {
    if let Some(stop) = config.stop_residual {
        if ue.gap_tol * 100.0 > stop {
            return Err(IqvipError::InvalidConfig(format!(
                "equilibrium gap tolerance {:e} must be at least 100x tighter than stop_residual {stop:e}",
                ue.gap_tol
            )));
        }
    }
    let tp = toll_problem(Arc::new(net.clone()), mu, *ue)?;
    let x0 = vec![0.0; net.controlled_count()];
    let mut trace = match solve(&tp.problem, &x0, None, config) {
        Ok(t) => t,
        Err(IqvipError::SolverDiverged { iteration, mut partial }) => {
            restate_residuals(net, &tp, mu, &mut partial)?;
            return Err(IqvipError::SolverDiverged { iteration, partial });
        }
        Err(e) => return Err(e),
    };
    let flows = restate_residuals(net, &tp, mu, &mut trace)?;
    Ok(TollRun { trace, flows })
}

fn restate_residuals(
    net: &TrafficNetwork,
    tp: &TollProblem,
    mu: f64,
    trace: &mut IterTrace,
) -> Result<Vec<Vec<f64>>> {
    let mut all = Vec::with_capacity(trace.records.len());
    for rec in &mut trace.records {
        let v = tp.flows.flows(&rec.x)?;
        rec.residual = traffic_residual(net, &rec.x, &v, mu)?;
        all.push(v);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor(lo: f64, hi: f64) -> TrafficNetwork {
        TrafficNetwork::from_json(&format!(
            r#"{{"nodes": [1, 2],
                "links": [{{"tail": 1, "head": 2, "t0": 10, "cap": 100}},
                          {{"tail": 1, "head": 2, "t0": 20, "cap": 100}}],
                "od": [{{"o": 1, "d": 2, "demand": 150}}],
                "controlled": [{{"link": 0, "lo": {lo}, "hi": {hi}}}]}}"#
        ))
        .unwrap()
    }

    #[test]
    fn residual_hand_clamp() {
        let net = corridor(40.0, 90.0);
        let r = traffic_residual(&net, &[5.0], &[100.0], 0.5).unwrap();
        assert!((r - 5.0).abs() < 1e-12);
    }

    #[test]
    fn residual_inside_corridor_is_mu_x() {
        let net = corridor(40.0, 90.0);
        let r = traffic_residual(&net, &[2.0], &[60.0], 0.5).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert_eq!(traffic_residual(&net, &[0.0], &[60.0], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn natural_map_norm_is_traffic_residual() {
        let net = Arc::new(corridor(40.0, 90.0));
        let tp = toll_problem(net.clone(), 0.5, UeParams::default()).unwrap();
        for x in [-3.0, 0.0, 1.5, 7.0, 40.0] {
            let v = tp.flows.flows(&[x]).unwrap();
            let expected = traffic_residual(&net, &[x], &v, 0.5).unwrap();
            let got = tp.problem.residual_norm(&[x]).unwrap();
            assert!((got - expected).abs() < 1e-12, "{x}: {got} vs {expected}");
        }
    }

    #[test]
    fn loose_equilibrium_tolerance_is_rejected() {
        let net = corridor(40.0, 90.0);
        let cfg = SolverConfig::inertial(0.6, 0.02).stop_on_residual(1e-6);
        let ue = UeParams { gap_tol: 1e-7, max_iter: 100 };
        assert!(matches!(solve_tolls(&net, 0.5, &cfg, &ue), Err(IqvipError::InvalidConfig(_))));
    }
}
