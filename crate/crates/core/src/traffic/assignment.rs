//! BPR link costs and Frank–Wolfe user equilibrium.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::network::TrafficNetwork;
use crate::error::{check_dim, check_finite, IqvipError, Result};

/// Golden-section tolerance on the Frank–Wolfe step length.
pub const LINE_SEARCH_TOL: f64 = 1e-10;

const INV_PHI: f64 = 0.618_033_988_749_894_9;
const BPR_ALPHA: f64 = 0.15;
const BPR_POWER: f64 = 4.0;
const CONJUGATE_MARGIN: f64 = 0.01;
const STALL_WINDOW: usize = 50;

/// `t0 * (1 + 0.15 (flow / cap)^4)`
pub fn bpr_time(t0: f64, cap: f64, flow: f64) -> Result<f64> {
    if !(t0 > 0.0) || !(cap > 0.0) {
        return Err(IqvipError::InvalidArgument(format!(
            "BPR needs t0 > 0 and cap > 0, got t0 = {t0}, cap = {cap}"
        )));
    }
    if !(flow >= 0.0) {
        return Err(IqvipError::InvalidArgument(format!("flow must be nonnegative, got {flow}")));
    }
    Ok(bpr(t0, cap, flow))
}

#[inline]
fn bpr(t0: f64, cap: f64, flow: f64) -> f64 {
    t0 * (1.0 + BPR_ALPHA * (flow / cap).powi(4))
}

/// `∫_0^flow bpr(s) ds = t0 (flow + 0.03 flow^5 / cap^4)`
#[inline]
fn bpr_integral(t0: f64, cap: f64, flow: f64) -> f64 {
    t0 * (flow + BPR_ALPHA / (BPR_POWER + 1.0) * flow * (flow / cap).powi(4))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UeParams {
    /// Stop once the relative gap falls to this value.
    pub gap_tol: f64,
    pub max_iter: usize,
}

impl Default for UeParams {
    fn default() -> Self {
        Self { gap_tol: 1e-8, max_iter: 50_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeResult {
    pub link_flows: Vec<f64>,
    /// Link flows of each OD pair, in `od_pairs` order.
    pub od_flows: Vec<Vec<f64>>,
    pub relative_gap: f64,
    pub iterations: usize,
    /// Beckmann objective after each iteration, starting from the initial
    /// all-or-nothing load.
    pub objective_history: Vec<f64>,
}

/// Per-link toll cost in time units: zero on uncontrolled links.
pub(crate) fn link_tolls(net: &TrafficNetwork, tolls: &[f64]) -> Result<Vec<f64>> {
    check_dim(net.controlled_count(), tolls.len())?;
    check_finite(tolls, "tolls")?;
    let mut out = vec![0.0; net.links.len()];
    for (c, &x) in net.controlled.iter().zip(tolls) {
        out[c.link] = x / net.value_of_time;
    }
    Ok(out)
}

/// Generalized link costs at the given flows.
pub fn link_costs(net: &TrafficNetwork, toll_costs: &[f64], flows: &[f64]) -> Vec<f64> {
    net.links
        .iter()
        .zip(flows)
        .zip(toll_costs)
        .map(|((l, &v), &x)| bpr(l.free_flow_time, l.capacity, v.max(0.0)) + x)
        .collect()
}

/// Beckmann potential `Σ ∫ t_a + toll_a * v_a`.
pub fn beckmann(net: &TrafficNetwork, toll_costs: &[f64], flows: &[f64]) -> f64 {
    net.links
        .iter()
        .zip(flows)
        .zip(toll_costs)
        .map(|((l, &v), &x)| bpr_integral(l.free_flow_time, l.capacity, v.max(0.0)) + x * v)
        .sum()
}

#[derive(Copy, Clone, PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path tree from `origin`: `(dist, pred_link)`. Equal-cost
/// alternatives resolve to the lowest link index.
pub(crate) fn shortest_paths(
    net: &TrafficNetwork,
    costs: &[f64],
    origin: usize,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if costs.iter().any(|&c| c < 0.0) {
        return bellman_ford(net, costs, origin);
    }
    let n = net.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[origin] = 0.0;
    heap.push(Entry { dist: 0.0, node: origin });
    while let Some(Entry { dist: d, node: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for &k in &net.out_links[u] {
            let v = net.links[k].head;
            let nd = d + costs[k];
            if nd < dist[v] || (nd == dist[v] && k < pred[v]) {
                let improved = nd < dist[v];
                dist[v] = nd;
                pred[v] = k;
                if improved && !done[v] {
                    heap.push(Entry { dist: nd, node: v });
                }
            }
        }
    }
    Ok((dist, pred))
}

fn bellman_ford(net: &TrafficNetwork, costs: &[f64], origin: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    let n = net.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    dist[origin] = 0.0;
    for round in 0..=n {
        let mut changed = false;
        for (k, l) in net.links.iter().enumerate() {
            if dist[l.tail].is_finite() {
                let nd = dist[l.tail] + costs[k];
                if nd < dist[l.head] {
                    dist[l.head] = nd;
                    pred[l.head] = k;
                    changed = true;
                } else if nd == dist[l.head] && k < pred[l.head] {
                    pred[l.head] = k;
                }
            }
        }
        if !changed {
            return Ok((dist, pred));
        }
        if round == n {
            break;
        }
    }
    Err(IqvipError::NegativeCycle)
}

/// All-or-nothing load of every OD pair onto its current shortest path.
/// Returns per-OD link flows and `Σ demand * shortest cost`.
fn all_or_nothing(net: &TrafficNetwork, costs: &[f64]) -> Result<(Vec<Vec<f64>>, f64)> {
    let m = net.links.len();
    let mut od_flows = vec![vec![0.0; m]; net.od_pairs.len()];
    let mut shortest_total = 0.0;
    let mut tree: Option<(usize, Vec<f64>, Vec<usize>)> = None;
    for (i, od) in net.od_pairs.iter().enumerate() {
        if tree.as_ref().map(|t| t.0) != Some(od.origin) {
            let (d, p) = shortest_paths(net, costs, od.origin)?;
            tree = Some((od.origin, d, p));
        }
        let (_, dist, pred) = tree.as_ref().unwrap();
        if !dist[od.destination].is_finite() {
            return Err(IqvipError::Unreachable {
                origin: net.node_id(od.origin).to_string(),
                destination: net.node_id(od.destination).to_string(),
            });
        }
        if od.demand == 0.0 {
            continue;
        }
        shortest_total += od.demand * dist[od.destination];
        let mut v = od.destination;
        let mut hops = 0;
        while v != od.origin {
            let k = pred[v];
            od_flows[i][k] += od.demand;
            v = net.links[k].tail;
            hops += 1;
            if hops > net.node_count() {
                return Err(IqvipError::NegativeCycle);
            }
        }
    }
    Ok((od_flows, shortest_total))
}

fn sum_commodities(od_flows: &[Vec<f64>], m: usize) -> Vec<f64> {
    let mut total = vec![0.0; m];
    for f in od_flows {
        for (t, v) in total.iter_mut().zip(f) {
            *t += v;
        }
    }
    total
}

fn relative_gap(costs: &[f64], flows: &[f64], shortest_total: f64) -> f64 {
    let total: f64 = costs.iter().zip(flows).map(|(c, v)| c * v).sum();
    if total == 0.0 {
        return 0.0;
    }
    ((total - shortest_total) / total.abs()).max(0.0)
}

/// `Z(v + s d) - Z(v)` for the Beckmann potential `Z`, without cancellation:
/// `(v + Δ)^5 - v^5 = Δ Σ_k (v + Δ)^k v^(4-k)`.
fn beckmann_increment(net: &TrafficNetwork, toll_costs: &[f64], flows: &[f64], dir: &[f64], s: f64) -> f64 {
    net.links
        .iter()
        .zip(flows.iter().zip(dir))
        .zip(toll_costs)
        .map(|((l, (&v, &d)), &x)| {
            let v = v.max(0.0);
            let w = (v + s * d).max(0.0);
            let delta = w - v;
            let quartic_sum = w.powi(4) + w.powi(3) * v + w * w * v * v + w * v.powi(3) + v.powi(4);
            let c4 = l.capacity.powi(4);
            l.free_flow_time * (delta + BPR_ALPHA / (BPR_POWER + 1.0) * delta * quartic_sum / c4) + x * delta
        })
        .sum()
}

/// `alpha * a + (1 - alpha) * b`.
fn blend(a: &[f64], b: &[f64], alpha: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect()
}

/// Weight of the previous target in a conjugate Frank–Wolfe direction, so the
/// new direction is conjugate to the last one under the diagonal Hessian of
/// the Beckmann potential. Zero falls back to a plain Frank–Wolfe step.
fn conjugate_weight(net: &TrafficNetwork, flows: &[f64], s_prev: &[f64], aon: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, l) in net.links.iter().enumerate() {
        let v = flows[i].max(0.0);
        let h = BPR_ALPHA * BPR_POWER * l.free_flow_time * v.powi(3) / l.capacity.powi(4);
        let back = s_prev[i] - flows[i];
        num += back * h * (aon[i] - flows[i]);
        den += back * h * (aon[i] - s_prev[i]);
    }
    if den == 0.0 || !den.is_finite() {
        return 0.0;
    }
    (num / den).clamp(0.0, 1.0 - CONJUGATE_MARGIN)
}

fn golden_section(f: impl Fn(f64) -> f64, tol: f64) -> f64 {
    let (mut a, mut b) = (0.0_f64, 1.0_f64);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    // Endpoints are candidates too; golden section never evaluates them.
    let mid = 0.5 * (a + b);
    [(0.0, f(0.0)), (1.0, f(1.0)), (mid, f(mid))]
        .into_iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(s, _)| s)
        .unwrap_or(mid)
}

/// Frank–Wolfe user equilibrium under the given tolls.
///
/// Starts from an all-or-nothing load at free-flow costs, then takes
/// conjugate Frank–Wolfe directions with a golden-section line search on the
/// Beckmann potential until the relative gap reaches `gap_tol`, the iteration
/// budget runs out, or the potential stops decreasing at round-off level.
pub fn user_equilibrium(net: &TrafficNetwork, tolls: &[f64], params: &UeParams) -> Result<UeResult> {
    if !(params.gap_tol > 0.0) {
        return Err(IqvipError::InvalidArgument(format!(
            "gap_tol must be positive, got {}",
            params.gap_tol
        )));
    }
    let m = net.links.len();
    let tc = link_tolls(net, tolls)?;
    let zero = vec![0.0; m];
    let (mut od_flows, _) = all_or_nothing(net, &link_costs(net, &tc, &zero))?;
    let mut flows = sum_commodities(&od_flows, m);
    let mut history = vec![beckmann(net, &tc, &flows)];
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut prev: Option<(Vec<f64>, Vec<Vec<f64>>)> = None;
    let mut since_progress = 0;
    while iterations < params.max_iter {
        let costs = link_costs(net, &tc, &flows);
        let (aon_od, shortest_total) = all_or_nothing(net, &costs)?;
        gap = relative_gap(&costs, &flows, shortest_total);
        if gap <= params.gap_tol {
            break;
        }
        let aon = sum_commodities(&aon_od, m);
        let alpha = match &prev {
            Some((s_prev, _)) => conjugate_weight(net, &flows, s_prev, &aon),
            None => 0.0,
        };
        let (target, target_od) = match prev.take() {
            Some((s_prev, s_prev_od)) if alpha > 0.0 => {
                let t = blend(&s_prev, &aon, alpha);
                let t_od = s_prev_od.iter().zip(&aon_od).map(|(a, b)| blend(a, b, alpha)).collect();
                (t, t_od)
            }
            _ => (aon, aon_od),
        };
        let dir: Vec<f64> = target.iter().zip(&flows).map(|(y, v)| y - v).collect();
        let step = golden_section(|s| beckmann_increment(net, &tc, &flows, &dir, s), LINE_SEARCH_TOL);
        let gain = beckmann_increment(net, &tc, &flows, &dir, step);
        for (v, d) in flows.iter_mut().zip(&dir) {
            *v += step * d;
        }
        for (f, y) in od_flows.iter_mut().zip(&target_od) {
            for (a, b) in f.iter_mut().zip(y) {
                *a += step * (b - *a);
            }
        }
        history.push(beckmann(net, &tc, &flows));
        prev = Some((target, target_od));
        iterations += 1;
        if gain < 0.0 {
            since_progress = 0;
        } else {
            since_progress += 1;
            if since_progress >= STALL_WINDOW {
                break;
            }
        }
    }
    if gap > params.gap_tol {
        let costs = link_costs(net, &tc, &flows);
        let (_, shortest_total) = all_or_nothing(net, &costs)?;
        gap = relative_gap(&costs, &flows, shortest_total);
        log::debug!("user equilibrium stopped after {iterations} iterations with relative gap {gap:e}");
    }
    Ok(UeResult { link_flows: flows, od_flows, relative_gap: gap, iterations, objective_history: history })
}
