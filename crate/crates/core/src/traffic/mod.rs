//! Road pricing on a BPR network: tolls on selected links steer the
//! user-equilibrium flows into moving corridors.

mod assignment;
mod network;
mod tolls;

pub use assignment::{beckmann, bpr_time, link_costs, user_equilibrium, UeParams, UeResult, LINE_SEARCH_TOL};
pub use network::{
    ControlledLink, ControlledSpec, Link, LinkSpec, NetworkFile, NodeId, OdPair, OdSpec,
    TrafficNetwork,
};
pub use tolls::{
    flow_map, solve_tolls, toll_problem, traffic_residual, NegatedFlowMap, TollProblem, TollRun,
};
