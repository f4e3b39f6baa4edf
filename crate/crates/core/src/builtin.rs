//! Problems that ship with the crate.

use std::sync::Arc;

use crate::problem::{IqvipProblem, LinearMap};
use crate::projections::{ConstantFamily, MovingSet, Singleton, SpanBoxFamily};
use crate::traffic::TrafficNetwork;

pub const EXAMPLE51: &str = "example51";
pub const TRAFFIC_DEMO: &str = "traffic-demo";
pub const FREE: &str = "free";

/// Synthetic four-bridge network document.
pub const TRAFFIC_DEMO_JSON: &str = include_str!("../data/traffic_demo.json");

/// `V(x) = Q x` on `R²` with the box spanned by `0` and `x` as constraint,
/// `mu = 2`, unique solution `0`.
///
/// `(L, eta) = (2.2, 2)` are the declared constants of this instance; they
/// are used as given.
pub fn example51() -> IqvipProblem {
    let q = LinearMap::new(vec![vec![3.4, -0.64], vec![2.375, 0.8]])
        .and_then(|m| m.with_constants(2.2, 2.0))
        .expect("static matrix");
    IqvipProblem::new(Arc::new(q), Arc::new(SpanBoxFamily::new(2)), 2.0)
        .and_then(|p| p.with_known_solution(vec![0.0, 0.0]))
        .expect("static problem")
}

/// `V = I` with `psi(x) = {x}`: the projection always returns `V(x)`, so the
/// natural map vanishes identically and the flow is pure damping.
///
/// An unconstrained `psi ≡ R^n` would not do this: there `B(x) = mu x`.
pub fn free_motion(dim: usize) -> IqvipProblem {
    let map = LinearMap::new(identity(dim))
        .and_then(|m| m.with_constants(1.0, 1.0))
        .expect("identity");
    let family = MovingSet::identity_shift(Arc::new(Singleton::new(vec![0.0; dim])));
    IqvipProblem::new(Arc::new(map), Arc::new(family), 1.0).expect("static problem")
}

/// `V = I` on all of `R^n`, where `B(x) = mu x` and the solution is `0`.
pub fn unconstrained(dim: usize, mu: f64) -> IqvipProblem {
    let map = LinearMap::new(identity(dim))
        .and_then(|m| m.with_constants(1.0, 1.0))
        .expect("identity");
    IqvipProblem::new(Arc::new(map), Arc::new(ConstantFamily::whole_space(dim)), mu)
        .and_then(|p| p.with_known_solution(vec![0.0; dim]))
        .expect("static problem")
}

fn identity(dim: usize) -> Vec<Vec<f64>> {
    (0..dim)
        .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn traffic_demo() -> TrafficNetwork {
    TrafficNetwork::from_json(TRAFFIC_DEMO_JSON).expect("shipped network parses")
}
