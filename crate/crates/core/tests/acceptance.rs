//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use iqvip::builtin;
use iqvip::certificates::{check_continuous, tau_max};
use iqvip::projections::{audit_projection, Translated};
use iqvip::traffic::{solve_tolls, user_equilibrium, TrafficNetwork, UeParams};
use iqvip::{
    check_discrete, compute_constants, estimate_linear_rate, estimate_rate, estimate_rho, integrate,
    linalg, solve, step_first_order, step_general, step_inertial, Ball, BoxSet, ConvexSet,
    DynamicsConfig, MovingSet, ProjectorFamily, Singleton, SolverConfig, SpanBoxFamily, ThetaPair,
    WholeSpace,
};
use rand::Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn certificate_reproduction() -> Outcome {
    let c = compute_constants(2.2, 2.0, 1.0, 2.0).unwrap();
    let pass = (c.theta - 0.08).abs() <= 1e-12
        && (c.theta1 - 0.00146).abs() <= 1e-5
        && (c.existence_margin - 0.083).abs() <= 5e-4;
    outcome(
        pass,
        format!("theta = {:.15}, theta1 = {:.6e}, margin = {:.6}", c.theta, c.theta1, c.existence_margin),
    )
}

fn step_counts() -> Outcome {
    let start = Instant::now();
    let p = builtin::example51();
    let x0 = [7.0, 5.0];
    let inertial = solve(&p, &x0, None, &SolverConfig::inertial(0.59, 0.000146).stop_on_error(0.1)).unwrap();
    let first = solve(&p, &x0, None, &SolverConfig::first_order(0.000146).stop_on_error(0.1)).unwrap();
    let elapsed = start.elapsed();
    let (ni, nf) = (inertial.steps_used as f64, first.steps_used as f64);
    let pass = (ni - 12957.0).abs() <= 0.1 * 12957.0
        && (nf - 20745.0).abs() <= 0.1 * 20745.0
        && ni < nf
        && elapsed < Duration::from_secs(5);
    outcome(
        pass,
        format!(
            "inertial {} steps ({:+.2}% vs 12957), first-order {} steps ({:+.2}% vs 20745), {:.2?}",
            inertial.steps_used,
            100.0 * (ni / 12957.0 - 1.0),
            first.steps_used,
            100.0 * (nf / 20745.0 - 1.0),
            elapsed
        ),
    )
}

fn linear_rate_sweep() -> Outcome {
    const PROBLEMS: u64 = 24;
    let results: Vec<(bool, String)> = (0..PROBLEMS)
        .into_par_iter()
        .map(|seed| {
            let planted = common::planted_problem(seed);
            let c = planted.problem.constants().unwrap();
            let mut rng = common::rng(1000 + seed);
            let sigma = rng.random_range(0.3..0.9);
            let tau = rng.random_range(0.5..0.95) * tau_max(c.theta1, sigma);
            let cert = check_discrete(c, sigma, tau);
            let x0: Vec<f64> = (0..planted.problem.dim()).map(|_| rng.random_range(-5.0..5.0)).collect();
            let e0 = linalg::dist(&x0, &planted.x_star);
            let cfg = SolverConfig::inertial(sigma, tau).with_max_iter(200_000).stop_on_error(1e-8 * e0);
            let trace = solve(&planted.problem, &x0, None, &cfg).unwrap();
            let rate = estimate_linear_rate(&trace, 0.5).unwrap();
            let ok = cert.discrete_ok && rate.q < 1.0 && rate.r_squared >= 0.99;
            (ok, format!("seed {seed} {} n={}: q={:.6} r2={:.5}", planted.kind, planted.problem.dim(), rate.q, rate.r_squared))
        })
        .collect();
    let failures: Vec<&String> = results.iter().filter(|r| !r.0).map(|r| &r.1).collect();
    let worst_r2 = results
        .iter()
        .filter_map(|r| r.1.rsplit("r2=").next()?.parse::<f64>().ok())
        .fold(f64::INFINITY, f64::min);
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{PROBLEMS} certified problems (dims 2-10), all q < 1, min r2 = {worst_r2:.5}")
        } else {
            format!("failures: {failures:?}")
        },
    )
}

fn exponential_trajectory() -> Outcome {
    let pair = ThetaPair { theta: 1.0, theta1: 1.0 };
    let (sigma, tau) = (50.0, 100.0);
    let admissible = check_continuous(pair, sigma, tau).unwrap();
    let p = builtin::example51();
    let run = |dt: f64| {
        let cfg = DynamicsConfig::constant(sigma, tau, vec![7.0, 5.0], 20.0).with_step(dt);
        estimate_rate(&integrate(&p, &cfg, p.known_solution()).unwrap(), 0.5).unwrap()
    };
    let coarse = run(1e-3);
    let fine = run(5e-4);
    let change = (coarse.zeta - fine.zeta).abs() / coarse.zeta;
    let pass = admissible && coarse.zeta > 0.0 && coarse.r_squared >= 0.98 && change < 0.01;
    outcome(
        pass,
        format!(
            "synthetic theta = theta1 = 1, (sigma, tau) = (50, 100) admissible = {admissible}; zeta = {:.6}, r2 = {:.6}, halved-dt change = {:.2e}",
            coarse.zeta, coarse.r_squared, change
        ),
    )
}

fn reduction_identities() -> Outcome {
    let p = builtin::example51();
    let mut rng = common::rng(7);
    let mut worst_general = 0.0_f64;
    let mut worst_inertial = 0.0_f64;
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-10.0..10.0)).collect();
        let xp: Vec<f64> = (0..2).map(|_| rng.random_range(-10.0..10.0)).collect();
        let sigma = rng.random_range(0.01..0.99);
        let tau = rng.random_range(1e-5..1.0);
        let g = step_general(&p, &x, &xp, 1.0, sigma, tau).unwrap();
        let i = step_inertial(&p, &x, &xp, sigma, tau).unwrap();
        worst_general = worst_general.max(linalg::dist(&g, &i));
        let i1 = step_inertial(&p, &x, &xp, 1.0, tau).unwrap();
        let f = step_first_order(&p, &x, tau).unwrap();
        worst_inertial = worst_inertial.max(linalg::dist(&i1, &f));
    }
    outcome(
        worst_general <= 1e-15 && worst_inertial <= 1e-15,
        format!("10^4 states: max |general(h=1) - inertial| = {worst_general:e}, max |inertial(sigma=1) - first-order| = {worst_inertial:e}"),
    )
}

fn error_bounds() -> Outcome {
    let p = builtin::example51();
    let c = p.constants().unwrap();
    let x_star = p.known_solution().unwrap().to_vec();
    let mut rng = common::rng(11);
    let (mut worst_a, mut worst_b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..1000 {
        let w: Vec<f64> = (0..2).map(|_| rng.random_range(-10.0..10.0)).collect();
        let b = p.natural_map(&w).unwrap();
        let d = linalg::sub(&w, &x_star);
        worst_a = worst_a.max(c.theta1 * linalg::norm_sq(&b) - linalg::dot(&b, &d));
        worst_b = worst_b.max(c.theta * linalg::norm(&d) - linalg::norm(&b));
    }
    outcome(
        worst_a <= 1e-9 && worst_b <= 1e-9,
        format!("10^3 w: max theta1|B|^2 - <B, w - x*> = {worst_a:.3e}, max theta|w - x*| - |B| = {worst_b:.3e}"),
    )
}

fn projection_oracles() -> Outcome {
    let sets: Vec<(&str, Box<dyn ConvexSet>)> = vec![
        ("box", Box::new(BoxSet::new(vec![-1.0, 0.5, -3.0], vec![2.0, 0.5, 4.0]).unwrap())),
        ("ball", Box::new(Ball::new(vec![1.0, -2.0, 0.5], 1.5).unwrap())),
        ("singleton", Box::new(Singleton::new(vec![0.3, -0.7]))),
        ("whole_space", Box::new(WholeSpace::new(3))),
        (
            "translated_box",
            Box::new(
                Translated::new(Arc::new(BoxSet::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap()), vec![-4.0, 3.0])
                    .unwrap(),
            ),
        ),
        ("span_box_image", SpanBoxFamily::new(2).image(&[3.0, -2.0]).unwrap()),
        (
            "moving_ball_image",
            MovingSet::linear(Arc::new(Ball::new(vec![0.0, 0.0], 2.0).unwrap()), 0.5)
                .unwrap()
                .image(&[4.0, -1.0])
                .unwrap(),
        ),
    ];
    let mut lines = Vec::new();
    let mut pass = true;
    for (i, (name, set)) in sets.iter().enumerate() {
        let audit = audit_projection(set.as_ref(), 20.0, 1000, 100 + i as u64).unwrap();
        pass &= audit.holds(1e-9);
        lines.push(format!(
            "{name}: {:.1e}/{:.1e}/{:.1e}",
            audit.nonexpansive, audit.obtuse_angle, audit.distance
        ));
    }
    let mut rho_lines = Vec::new();
    for l in [0.0, 0.25, 1.0, 3.0] {
        let base: Arc<dyn ConvexSet> = Arc::new(BoxSet::new(vec![-1.0, -2.0], vec![1.0, 0.5]).unwrap());
        let linear = MovingSet::linear(base.clone(), l).unwrap();
        let wavy = MovingSet::new(
            base,
            Arc::new(move |x: &[f64]| x.iter().map(|v| l * v.sin()).collect()),
            l,
        )
        .unwrap();
        let r_lin = estimate_rho(&linear, 1000, 5).unwrap();
        let r_wavy = estimate_rho(&wavy, 1000, 6).unwrap();
        pass &= r_lin <= l + 1e-6 && r_wavy <= l + 1e-6;
        rho_lines.push(format!("l={l}: {r_lin:.4}/{r_wavy:.4}"));
    }
    outcome(
        pass,
        format!(
            "worst (a)/(b)/(c) excess per projector [{}]; estimate_rho linear/sine shift [{}]",
            lines.join(", "),
            rho_lines.join(", ")
        ),
    )
}

fn traffic_suite() -> Outcome {
    let start = Instant::now();
    let net = builtin::traffic_demo();
    let ue = UeParams::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for (sigma, tau, mu) in [(0.6, 0.02, 0.5), (0.6, 1.0 / 30.0, 0.8)] {
        let cfg = SolverConfig::inertial(sigma, tau).with_max_iter(150);
        let inertial = solve_tolls(&net, mu, &cfg, &ue).unwrap().trace.residuals();
        let first = solve_tolls(&net, mu, &SolverConfig::first_order(tau).with_max_iter(150), &ue)
            .unwrap()
            .trace
            .residuals();
        let r0 = inertial[0];
        let hit = inertial.iter().position(|&r| r < 0.01 * r0);
        pass &= hit.is_some();
        let mut ordered = true;
        for k in 1..=40 {
            let threshold = r0 * 10f64.powf(-0.1 * k as f64);
            let ni = first_below(&inertial, threshold);
            let nf = first_below(&first, threshold);
            match (ni, nf) {
                (Some(a), Some(b)) => ordered &= a <= b,
                (None, Some(_)) => ordered = false,
                _ => {}
            }
        }
        pass &= ordered;
        parts.push(format!(
            "(sigma {sigma}, tau {tau:.4}, mu {mu}): r0 = {r0:.4}, inertial below 1% at n = {:?} (first-order {:?}), inertial never slower at 40 thresholds down to 1e-4 r0: {ordered}",
            hit,
            first_below(&first, 0.01 * r0)
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    outcome(pass, format!("{}; {:.2?}", parts.join("; "), elapsed))
}

fn first_below(residuals: &[f64], threshold: f64) -> Option<usize> {
    residuals.iter().position(|&r| r < threshold)
}

fn brute_force_equivalence() -> Outcome {
    const GRID: usize = 1_000_000;
    let theta1 = compute_constants(2.2, 2.0, 1.0, 2.0).unwrap().theta1;
    let pair = ThetaPair { theta: 0.08, theta1 };
    let mut worst_tau = 0.0_f64;
    let dtau = theta1 / GRID as f64;
    for sigma in [0.1, 0.3, 0.5, 0.59, 0.8, 0.95] {
        let mut largest = 0.0;
        for k in 1..=GRID {
            let tau = k as f64 * dtau;
            if tau < theta1 * (1.0 - sigma) / 4.0 && tau < theta1 * sigma * sigma / (4.0 - sigma) {
                largest = tau;
            }
        }
        let reported = check_discrete(pair, sigma, 0.5 * largest).tau_max;
        worst_tau = worst_tau.max((reported - largest).abs() / dtau);
    }

    let mut worst_flow = 0.0_f64;
    for (demand, tolls) in [(150.0, [0.0]), (150.0, [4.0]), (260.0, [-2.0]), (60.0, [0.0])] {
        let net = TrafficNetwork::from_json(&format!(
            r#"{{"nodes": [1, 2],
                "links": [{{"tail": 1, "head": 2, "t0": 10, "cap": 100}},
                          {{"tail": 1, "head": 2, "t0": 20, "cap": 100}}],
                "od": [{{"o": 1, "d": 2, "demand": {demand}}}],
                "controlled": [{{"link": 0, "lo": 0, "hi": 1000}}]}}"#
        ))
        .unwrap();
        let ue = user_equilibrium(&net, &tolls, &UeParams { gap_tol: 1e-12, max_iter: 10_000 }).unwrap();
        let oracle = beckmann_scan(demand, tolls[0], GRID);
        worst_flow = worst_flow.max((ue.link_flows[0] - oracle).abs());
    }
    outcome(
        worst_tau <= 1.0 && worst_flow <= 1e-3,
        format!(
            "tau_max vs 10^6-point (B2) scan: worst gap {worst_tau:.3} grid steps; 2-link UE vs Beckmann scan: worst flow gap {worst_flow:.2e}"
        ),
    )
}

/// Flow on link 0 minimising the two-link Beckmann integral over a uniform
/// split grid.
fn beckmann_scan(demand: f64, toll0: f64, grid: usize) -> f64 {
    let integral = |t0: f64, c: f64, v: f64| t0 * (v + 0.03 * v.powi(5) / c.powi(4));
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=grid {
        let v = demand * k as f64 / grid as f64;
        let z = integral(10.0, 100.0, v) + toll0 * v + integral(20.0, 100.0, demand - v);
        if z < best.0 {
            best = (z, v);
        }
    }
    best.1
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("certificate reproduction", certificate_reproduction),
        ("step-count reproduction", step_counts),
        ("linear-rate property", linear_rate_sweep),
        ("exponential-trajectory property", exponential_trajectory),
        ("reduction identities", reduction_identities),
        ("error-bound suite", error_bounds),
        ("projection oracle suite", projection_oracles),
        ("traffic property suite", traffic_suite),
        ("brute-force equivalence", brute_force_equivalence),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
