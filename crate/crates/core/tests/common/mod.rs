//! Random strongly monotone affine problems with a planted solution.
//!
//! `A = Q (D + b J) Qᵀ` with `Q` orthogonal, `D` diagonal in `[eta, eta + spread]`
//! and `J` a block rotation, so `<Ax, x> >= eta ‖x‖²` and `‖A‖ <= max D + b`.
//! The offset `c` is chosen so that a drawn `x*` solves the problem: `V(x*)`
//! is the minimiser of `<x*, ·>` over `psi(x*)`.

#![allow(dead_code)]

use std::sync::Arc;

use iqvip::projections::{Ball, BoxSet, ConstantFamily, MovingSet, ProjectorFamily};
use iqvip::{IqvipProblem, LinearMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Planted {
    pub problem: IqvipProblem,
    pub x_star: Vec<f64>,
    pub kind: &'static str,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_orthogonal(n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
    while q.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for u in &q {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= d * ui;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-3 {
            q.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    q
}

/// `Q M Qᵀ` where the rows of `q` are the orthonormal vectors.
fn conjugate(q: &[Vec<f64>], m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = q.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                for l in 0..n {
                    s += q[k][i] * m[k][l] * q[l][j];
                }
            }
            out[i][j] = s;
        }
    }
    out
}

fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum()).collect()
}

/// Draws until `theta > 0`. `kind` cycles through box, ball and moving box.
pub fn planted_problem(seed: u64) -> Planted {
    let mut rng = rng(seed);
    loop {
        let n = rng.random_range(2..=10usize);
        let eta = rng.random_range(1.2..2.0);
        let spread = rng.random_range(0.0..0.2);
        let b = rng.random_range(0.0..0.2);
        let mu = eta;
        let lipschitz = eta + spread + b;

        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = eta + if i == 0 { 0.0 } else { rng.random_range(0.0..=spread) };
        }
        for k in (0..n - 1).step_by(2) {
            m[k][k + 1] = b;
            m[k + 1][k] = -b;
        }
        let q = random_orthogonal(n, &mut rng);
        let a = conjugate(&q, &m);

        let x_star: Vec<f64> = (0..n)
            .map(|_| {
                let v: f64 = rng.random_range(0.2..3.0);
                if rng.random_bool(0.5) { v } else { -v }
            })
            .collect();

        let (kind, family, v_star): (&'static str, Arc<dyn ProjectorFamily>, Vec<f64>) =
            match seed % 3 {
                0 => {
                    let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..0.0)).collect();
                    let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.5..4.0)).collect();
                    let v = vertex(&x_star, &lo, &hi, 0.0);
                    let set = BoxSet::new(lo, hi).unwrap();
                    ("box", Arc::new(ConstantFamily::new(Arc::new(set))), v)
                }
                1 => {
                    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                    let r = rng.random_range(0.5..3.0);
                    let norm = x_star.iter().map(|a| a * a).sum::<f64>().sqrt();
                    let v = c.iter().zip(&x_star).map(|(ci, xi)| ci - r * xi / norm).collect();
                    ("ball", Arc::new(ConstantFamily::new(Arc::new(Ball::new(c, r).unwrap()))), v)
                }
                _ => {
                    let l = rng.random_range(0.05..0.3);
                    let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..0.0)).collect();
                    let hi: Vec<f64> = lo.iter().map(|x| x + rng.random_range(0.5..4.0)).collect();
                    let v = vertex(&x_star, &lo, &hi, l);
                    let set = BoxSet::new(lo, hi).unwrap();
                    ("moving_box", Arc::new(MovingSet::linear(Arc::new(set), l).unwrap()), v)
                }
            };

        let ax = mat_vec(&a, &x_star);
        let offset: Vec<f64> = v_star.iter().zip(&ax).map(|(v, a)| v - a).collect();
        let map = LinearMap::new(a)
            .unwrap()
            .with_offset(offset)
            .unwrap()
            .with_constants(lipschitz, eta)
            .unwrap();
        let problem = IqvipProblem::new(Arc::new(map), family, mu)
            .unwrap()
            .with_known_solution_tol(x_star.clone(), 1e-8)
            .unwrap();
        if problem.constants().is_some_and(|c| c.theta > 0.0) {
            return Planted { problem, x_star, kind };
        }
    }
}

/// Minimiser of `<x, ·>` over `[lo, hi] + shift * x`.
fn vertex(x: &[f64], lo: &[f64], hi: &[f64], shift: f64) -> Vec<f64> {
    x.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&xi, (&l, &h))| if xi > 0.0 { l } else { h } + shift * xi)
        .collect()
}
