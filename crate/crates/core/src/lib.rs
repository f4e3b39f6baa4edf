//! Solvers for inverse quasi-variational inequality problems (IQVIPs).
//!
//! Given a forward map `V` and a set-valued constraint `psi`, an IQVIP asks for
//! `x*` with `V(x*) ∈ psi(x*)` and `<x*, z - V(x*)> >= 0` for every `z ∈ psi(x*)`.
//! Solutions are exactly the zeros of the natural map
//! `B(x) = V(x) - P_{psi(x)}(V(x) - mu x)`.
//!
//! The crate provides:
//!
//! * [`problem`]: the problem object and its natural map,
//! * [`projections`]: projector families and projection oracles,
//! * [`certificates`]: convergence constants and parameter conditions,
//! * [`dynamics`]: RK4 simulation of the damped second-order flow,
//! * [`solvers`]: the inertial projection scheme and its relatives,
//! * [`traffic`]: toll setting on a BPR network with user-equilibrium flows,
//! * [`cli`]: the `iqvip` command-line runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builtin;
pub mod certificates;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod linalg;
pub mod problem;
pub mod projections;
pub mod solvers;
pub mod traffic;

pub use certificates::{
    check_conditions_i_iii, check_continuous, check_discrete, compute_constants,
    time_varying_coefficients, CertifiedConstants, StepCertificate, ThetaPair,
};
pub use dynamics::{
    estimate_rate, integrate, vector_field, DynamicsConfig, RateEstimate, TimeFn,
    TrajectorySample, TrajectoryTrace,
};
pub use error::{IqvipError, Result};
pub use problem::{FnMap, ForwardMap, IqvipProblem, LinearMap, MapConstants};
pub use projections::{
    estimate_rho, project_box, project_moving, verify_projection, Ball, BoxSet, ConstantFamily,
    ConvexSet, MovingSet, ProjectorFamily, Singleton, SpanBoxFamily, WholeSpace,
};
pub use solvers::{
    estimate_linear_rate, solve, step_first_order, step_general, step_inertial, Coefficient,
    IterRecord, IterTrace, LinearRate, SolverConfig, StopReason, Variant,
};
