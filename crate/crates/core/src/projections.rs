//! Metric projections onto closed convex sets and the projector families
//! `x ↦ P_{psi(x)}` used as IQVIP constraints.
//!
//! Every shipped set can draw members at random so that the variational
//! characterization of the projection can be checked by sampling.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, check_finite, IqvipError, Result};
use crate::linalg;

/// Absolute slack of the sampled projection inequalities.
pub const VERIFY_TOL: f64 = 1e-9;

/// Half-width of the cube `[-r, r]^n` that `estimate_rho` samples from.
pub const DEFAULT_SAMPLE_RADIUS: f64 = 10.0;

/// A nonempty closed convex subset of `R^n` with its metric projection.
pub trait ConvexSet: Send + Sync {
    fn dim(&self) -> usize;

    /// Nearest point of the set to `y`.
    fn project(&self, y: &[f64]) -> Vec<f64>;

    /// Draws a member of the set, or `None` when the set has no sampler.
    fn sample(&self, _rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        None
    }
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        for (index, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(IqvipError::InvalidBox { index, lower: lo, upper: hi });
            }
        }
        Ok(Self { lower, upper })
    }

    /// Box spanned by the origin and `corner`.
    pub fn spanned_by_origin(corner: &[f64]) -> Self {
        Self {
            lower: corner.iter().map(|&c| c.min(0.0)).collect(),
            upper: corner.iter().map(|&c| c.max(0.0)).collect(),
        }
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn clamp(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| v.max(lo).min(hi))
            .collect()
    }
}

impl ConvexSet for BoxSet {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn project(&self, y: &[f64]) -> Vec<f64> {
        self.clamp(y)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        // A quarter of the draws land on a vertex, where the obtuse-angle
        // inequality is tightest.
        let vertex = rng.random_bool(0.25);
        Some(
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(&lo, &hi)| {
                    if lo == hi {
                        lo
                    } else if vertex {
                        if rng.random_bool(0.5) {
                            lo
                        } else {
                            hi
                        }
                    } else {
                        rng.random_range(lo..=hi)
                    }
                })
                .collect(),
        )
    }
}

/// Closed Euclidean ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    center: Vec<f64>,
    radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        check_finite(&center, "ball center")?;
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(IqvipError::InvalidArgument(format!(
                "ball radius must be finite and nonnegative, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

impl ConvexSet for Ball {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn project(&self, y: &[f64]) -> Vec<f64> {
        let offset = linalg::sub(y, &self.center);
        let d = linalg::norm(&offset);
        if d <= self.radius {
            y.to_vec()
        } else {
            linalg::axpy(&self.center, self.radius / d, &offset)
        }
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let n = self.center.len();
        let dir: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
        let len = linalg::norm(&dir);
        if len == 0.0 {
            return Some(self.center.clone());
        }
        let r = if rng.random_bool(0.25) {
            self.radius
        } else {
            self.radius * rng.random::<f64>().powf(1.0 / n as f64)
        };
        Some(linalg::axpy(&self.center, r / len, &dir))
    }
}

/// A single point.
#[derive(Debug, Clone, PartialEq)]
pub struct Singleton {
    point: Vec<f64>,
}

impl Singleton {
    pub fn new(point: Vec<f64>) -> Self {
        Self { point }
    }
}

impl ConvexSet for Singleton {
    fn dim(&self) -> usize {
        self.point.len()
    }

    fn project(&self, _y: &[f64]) -> Vec<f64> {
        self.point.clone()
    }

    fn sample(&self, _rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        Some(self.point.clone())
    }
}

/// All of `R^n`; the projection is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WholeSpace {
    dim: usize,
}

impl WholeSpace {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl ConvexSet for WholeSpace {
    fn dim(&self) -> usize {
        self.dim
    }

    fn project(&self, y: &[f64]) -> Vec<f64> {
        y.to_vec()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        Some(
            (0..self.dim)
                .map(|_| rng.random_range(-1e3..=1e3))
                .collect(),
        )
    }
}

/// `base + offset`.
pub struct Translated {
    base: Arc<dyn ConvexSet>,
    offset: Vec<f64>,
}

impl Translated {
    pub fn new(base: Arc<dyn ConvexSet>, offset: Vec<f64>) -> Result<Self> {
        check_dim(base.dim(), offset.len())?;
        Ok(Self { base, offset })
    }
}

impl ConvexSet for Translated {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn project(&self, y: &[f64]) -> Vec<f64> {
        let inner = self.base.project(&linalg::sub(y, &self.offset));
        linalg::add(&self.offset, &inner)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        self.base
            .sample(rng)
            .map(|a| linalg::add(&self.offset, &a))
    }
}

/// `project_box`: componentwise clamp of `y` into `bx`.
pub fn project_box(bx: &BoxSet, y: &[f64]) -> Result<Vec<f64>> {
    check_dim(bx.dim(), y.len())?;
    Ok(bx.clamp(y))
}

/// The family `x ↦ P_{psi(x)}` of a set-valued constraint.
///
/// `rho` is the Lipschitz modulus of the family in its base point:
/// `‖P_{psi(r)}(y) - P_{psi(s)}(y)‖ <= rho ‖r - s‖`.
pub trait ProjectorFamily: Send + Sync {
    fn dim(&self) -> usize;

    fn project(&self, base: &[f64], target: &[f64]) -> Vec<f64>;

    fn rho(&self) -> f64;

    /// The set `psi(base)` itself, when the family can materialize it.
    fn image(&self, _base: &[f64]) -> Option<Box<dyn ConvexSet>> {
        None
    }
}

/// `psi(x) ≡ C` for a fixed set `C`; `rho = 0`.
pub struct ConstantFamily {
    set: Arc<dyn ConvexSet>,
}

impl ConstantFamily {
    pub fn new(set: Arc<dyn ConvexSet>) -> Self {
        Self { set }
    }

    pub fn whole_space(dim: usize) -> Self {
        Self::new(Arc::new(WholeSpace::new(dim)))
    }
}

impl ProjectorFamily for ConstantFamily {
    fn dim(&self) -> usize {
        self.set.dim()
    }

    fn project(&self, _base: &[f64], target: &[f64]) -> Vec<f64> {
        self.set.project(target)
    }

    fn rho(&self) -> f64 {
        0.0
    }

    fn image(&self, _base: &[f64]) -> Option<Box<dyn ConvexSet>> {
        Some(Box::new(Shared(self.set.clone())))
    }
}

struct Shared(Arc<dyn ConvexSet>);

impl ConvexSet for Shared {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn project(&self, y: &[f64]) -> Vec<f64> {
        self.0.project(y)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        self.0.sample(rng)
    }
}

/// `psi(x)` is the box with opposite corners `0` and `x`, i.e.
/// `[min(0, x_i), max(0, x_i)]` in every coordinate.
///
/// Clamping bounds move by at most `|r_i - s_i|` per coordinate, so `rho = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpanBoxFamily {
    dim: usize,
}

impl SpanBoxFamily {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl ProjectorFamily for SpanBoxFamily {
    fn dim(&self) -> usize {
        self.dim
    }

    fn project(&self, base: &[f64], target: &[f64]) -> Vec<f64> {
        target
            .iter()
            .zip(base)
            .map(|(&y, &b)| y.max(b.min(0.0)).min(b.max(0.0)))
            .collect()
    }

    fn rho(&self) -> f64 {
        1.0
    }

    fn image(&self, base: &[f64]) -> Option<Box<dyn ConvexSet>> {
        Some(Box::new(BoxSet::spanned_by_origin(base)))
    }
}

pub type ShiftFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Moving set `psi(x) = shift(x) + base`, with `shift` Lipschitz with
/// constant `shift_lipschitz`; the family then has `rho = shift_lipschitz`.
#[derive(Clone)]
pub struct MovingSet {
    base: Arc<dyn ConvexSet>,
    shift: ShiftFn,
    shift_lipschitz: f64,
}

impl fmt::Debug for MovingSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MovingSet")
            .field("dim", &self.base.dim())
            .field("shift_lipschitz", &self.shift_lipschitz)
            .finish()
    }
}

impl MovingSet {
    pub fn new(base: Arc<dyn ConvexSet>, shift: ShiftFn, shift_lipschitz: f64) -> Result<Self> {
        if !(shift_lipschitz >= 0.0) || !shift_lipschitz.is_finite() {
            return Err(IqvipError::InvalidArgument(format!(
                "shift Lipschitz constant must be finite and nonnegative, got {shift_lipschitz}"
            )));
        }
        Ok(Self { base, shift, shift_lipschitz })
    }

    /// `psi(x) = scale * x + base`.
    pub fn linear(base: Arc<dyn ConvexSet>, scale: f64) -> Result<Self> {
        Self::new(
            base,
            Arc::new(move |x: &[f64]| linalg::scale(x, scale)),
            scale.abs(),
        )
    }

    /// `psi(x) = x + base`.
    pub fn identity_shift(base: Arc<dyn ConvexSet>) -> Self {
        Self {
            base,
            shift: Arc::new(|x: &[f64]| x.to_vec()),
            shift_lipschitz: 1.0,
        }
    }

    pub fn base(&self) -> &Arc<dyn ConvexSet> {
        &self.base
    }

    pub fn shift_at(&self, x: &[f64]) -> Vec<f64> {
        (self.shift)(x)
    }

    fn project_unchecked(&self, base_point: &[f64], y: &[f64]) -> Vec<f64> {
        let h = (self.shift)(base_point);
        let inner = self.base.project(&linalg::sub(y, &h));
        linalg::add(&h, &inner)
    }
}

impl ProjectorFamily for MovingSet {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn project(&self, base: &[f64], target: &[f64]) -> Vec<f64> {
        self.project_unchecked(base, target)
    }

    fn rho(&self) -> f64 {
        self.shift_lipschitz
    }

    fn image(&self, base: &[f64]) -> Option<Box<dyn ConvexSet>> {
        Translated::new(self.base.clone(), (self.shift)(base))
            .ok()
            .map(|t| Box::new(t) as Box<dyn ConvexSet>)
    }
}

/// `project_moving`: `h(base_point) + P_base(y - h(base_point))`.
pub fn project_moving(set: &MovingSet, base_point: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_dim(set.dim(), base_point.len())?;
    check_dim(set.dim(), y.len())?;
    let h = (set.shift)(base_point);
    check_dim(set.dim(), h.len())?;
    Ok(set.project_unchecked(base_point, y))
}

/// Checks `<y - P(y), a - P(y)> <= 1e-9` for `sample_count` members `a` of
/// the set drawn with `seed`.
pub fn verify_projection(
    set: &dyn ConvexSet,
    y: &[f64],
    sample_count: usize,
    seed: u64,
) -> Result<bool> {
    check_dim(set.dim(), y.len())?;
    if sample_count == 0 {
        return Err(IqvipError::InvalidArgument("sample_count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = set.project(y);
    let residual = linalg::sub(y, &p);
    for _ in 0..sample_count {
        let a = set.sample(&mut rng).ok_or(IqvipError::UnsupportedVerification)?;
        if linalg::dot(&residual, &linalg::sub(&a, &p)) > VERIFY_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Worst observed violations of the three basic projection inequalities.
///
/// Each field is `max(lhs - rhs)` over the samples, so a correct projector
/// reports values at or below rounding noise.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProjectionAudit {
    /// `‖P(y) - P(z)‖ - ‖y - z‖`
    pub nonexpansive: f64,
    /// `<z - P(z), a - P(z)>`
    pub obtuse_angle: f64,
    /// `‖P(z) - a‖² - ‖z - a‖² + ‖z - P(z)‖²`
    pub distance: f64,
    /// `‖P(P(y)) - P(y)‖`
    pub idempotence: f64,
    pub samples: usize,
}

impl ProjectionAudit {
    pub fn holds(&self, tol: f64) -> bool {
        self.nonexpansive <= tol
            && self.obtuse_angle <= tol
            && self.distance <= tol
            && self.idempotence <= tol
    }
}

/// Samples `sample_count` triples `(y, z, a)` with `y, z` uniform in
/// `[-radius, radius]^n` and `a` drawn from the set, and records the worst
/// slack of each projection inequality.
pub fn audit_projection(
    set: &dyn ConvexSet,
    radius: f64,
    sample_count: usize,
    seed: u64,
) -> Result<ProjectionAudit> {
    if sample_count == 0 {
        return Err(IqvipError::InvalidArgument("sample_count must be at least 1".into()));
    }
    let n = set.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut audit = ProjectionAudit {
        nonexpansive: f64::NEG_INFINITY,
        obtuse_angle: f64::NEG_INFINITY,
        distance: f64::NEG_INFINITY,
        idempotence: 0.0,
        samples: sample_count,
    };
    for _ in 0..sample_count {
        let y = uniform_cube(&mut rng, n, radius);
        let z = uniform_cube(&mut rng, n, radius);
        let a = set.sample(&mut rng).ok_or(IqvipError::UnsupportedVerification)?;
        let py = set.project(&y);
        let pz = set.project(&z);

        let lhs = linalg::dist(&py, &pz);
        audit.nonexpansive = audit.nonexpansive.max(lhs - linalg::dist(&y, &z));

        let r = linalg::sub(&z, &pz);
        audit.obtuse_angle = audit
            .obtuse_angle
            .max(linalg::dot(&r, &linalg::sub(&a, &pz)));

        let d = linalg::norm_sq(&linalg::sub(&pz, &a)) - linalg::norm_sq(&linalg::sub(&z, &a))
            + linalg::norm_sq(&r);
        audit.distance = audit.distance.max(d);

        audit.idempotence = audit
            .idempotence
            .max(linalg::dist(&set.project(&py), &py));
    }
    Ok(audit)
}

/// Empirical lower bound on the family modulus `rho`, sampling `y, r, s`
/// uniformly in `[-10, 10]^n`.
pub fn estimate_rho(family: &dyn ProjectorFamily, sample_count: usize, seed: u64) -> Result<f64> {
    estimate_rho_in(family, DEFAULT_SAMPLE_RADIUS, sample_count, seed)
}

pub fn estimate_rho_in(
    family: &dyn ProjectorFamily,
    radius: f64,
    sample_count: usize,
    seed: u64,
) -> Result<f64> {
    if sample_count == 0 {
        return Err(IqvipError::InvalidArgument("sample_count must be at least 1".into()));
    }
    let n = family.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<f64> = None;
    for _ in 0..sample_count {
        let y = uniform_cube(&mut rng, n, radius);
        let r = uniform_cube(&mut rng, n, radius);
        let s = uniform_cube(&mut rng, n, radius);
        let gap = linalg::dist(&r, &s);
        if gap == 0.0 {
            continue;
        }
        let ratio = linalg::dist(&family.project(&r, &y), &family.project(&s, &y)) / gap;
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    best.ok_or_else(|| {
        IqvipError::InsufficientSamples("every sampled pair (r, s) was degenerate".into())
    })
}

pub(crate) fn uniform_cube(rng: &mut dyn RngCore, n: usize, radius: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-radius..=radius)).collect()
}

// Box-Muller; one normal per call is plenty here.
fn standard_normal(rng: &mut dyn RngCore) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
