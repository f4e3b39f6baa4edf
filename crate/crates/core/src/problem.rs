//! The IQVIP problem object and its natural map.

use std::fmt;
use std::sync::Arc;

use crate::certificates::{compute_constants, CertifiedConstants};
use crate::error::{check_dim, check_finite, IqvipError, Result};
use crate::linalg;
use crate::projections::ProjectorFamily;

/// Residual below which a declared solution is accepted.
pub const SOLUTION_TOL: f64 = 1e-9;

/// Lipschitz modulus `L` and strong-monotonicity modulus `eta` of a forward map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapConstants {
    pub lipschitz: f64,
    pub strong_monotonicity: f64,
}

impl MapConstants {
    pub fn new(lipschitz: f64, strong_monotonicity: f64) -> Result<Self> {
        if !(strong_monotonicity > 0.0)
            || !lipschitz.is_finite()
            || strong_monotonicity > lipschitz
        {
            return Err(IqvipError::InvalidConstants(format!(
                "need 0 < eta <= L, got L = {lipschitz}, eta = {strong_monotonicity}"
            )));
        }
        Ok(Self { lipschitz, strong_monotonicity })
    }
}

/// The single-valued map `V` of an IQVIP.
pub trait ForwardMap: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Declared `(L, eta)`, when known.
    fn constants(&self) -> Option<MapConstants> {
        None
    }
}

/// Affine map `x ↦ A x + c` with a dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    dim: usize,
    matrix: Vec<f64>,
    offset: Vec<f64>,
    constants: Option<MapConstants>,
}

impl LinearMap {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(IqvipError::InvalidArgument("matrix must be nonempty".into()));
        }
        let mut matrix = Vec::with_capacity(dim * dim);
        for row in &rows {
            check_dim(dim, row.len())?;
            matrix.extend_from_slice(row);
        }
        check_finite(&matrix, "matrix")?;
        Ok(Self { dim, matrix, offset: vec![0.0; dim], constants: None })
    }

    pub fn with_offset(mut self, offset: Vec<f64>) -> Result<Self> {
        check_dim(self.dim, offset.len())?;
        check_finite(&offset, "offset")?;
        self.offset = offset;
        Ok(self)
    }

    pub fn with_constants(mut self, lipschitz: f64, strong_monotonicity: f64) -> Result<Self> {
        self.constants = Some(MapConstants::new(lipschitz, strong_monotonicity)?);
        Ok(self)
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.matrix[row * self.dim + col]
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .chunks_exact(self.dim)
            .zip(&self.offset)
            .map(|(row, c)| linalg::dot(row, x) + c)
            .collect()
    }
}

impl ForwardMap for LinearMap {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        Ok(self.apply(x))
    }

    fn constants(&self) -> Option<MapConstants> {
        self.constants
    }
}

/// Forward map backed by a closure.
pub struct FnMap<F> {
    dim: usize,
    f: F,
    constants: Option<MapConstants>,
}

impl<F> FnMap<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f, constants: None }
    }

    pub fn with_constants(mut self, lipschitz: f64, strong_monotonicity: f64) -> Result<Self> {
        self.constants = Some(MapConstants::new(lipschitz, strong_monotonicity)?);
        Ok(self)
    }
}

impl<F> ForwardMap for FnMap<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let v = (self.f)(x);
        check_dim(self.dim, v.len())?;
        Ok(v)
    }

    fn constants(&self) -> Option<MapConstants> {
        self.constants
    }
}

/// An IQVIP instance: find `x*` with `V(x*) ∈ psi(x*)` and
/// `<x*, z - V(x*)> >= 0` for all `z ∈ psi(x*)`.
///
/// Cloning is cheap; the map and the family are shared.
#[derive(Clone)]
pub struct IqvipProblem {
    map: Arc<dyn ForwardMap>,
    family: Arc<dyn ProjectorFamily>,
    mu: f64,
    known_solution: Option<Vec<f64>>,
}

impl fmt::Debug for IqvipProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IqvipProblem")
            .field("dim", &self.dim())
            .field("mu", &self.mu)
            .field("rho", &self.family.rho())
            .field("map_constants", &self.map.constants())
            .field("known_solution", &self.known_solution)
            .finish()
    }
}

impl IqvipProblem {
    pub fn new(
        map: Arc<dyn ForwardMap>,
        family: Arc<dyn ProjectorFamily>,
        mu: f64,
    ) -> Result<Self> {
        check_dim(map.dim(), family.dim())?;
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(IqvipError::InvalidArgument(format!("mu must be positive, got {mu}")));
        }
        Ok(Self { map, family, mu, known_solution: None })
    }

    /// Attaches a solution, rejecting it if its residual exceeds [`SOLUTION_TOL`].
    pub fn with_known_solution(self, x_star: Vec<f64>) -> Result<Self> {
        self.with_known_solution_tol(x_star, SOLUTION_TOL)
    }

    pub fn with_known_solution_tol(mut self, x_star: Vec<f64>, tol: f64) -> Result<Self> {
        let r = self.residual_norm(&x_star)?;
        if r > tol {
            return Err(IqvipError::InvalidArgument(format!(
                "declared solution has residual {r:e} > {tol:e}"
            )));
        }
        self.known_solution = Some(x_star);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn map(&self) -> &Arc<dyn ForwardMap> {
        &self.map
    }

    pub fn family(&self) -> &Arc<dyn ProjectorFamily> {
        &self.family
    }

    pub fn known_solution(&self) -> Option<&[f64]> {
        self.known_solution.as_deref()
    }

    /// Certificate constants, when the map declares `(L, eta)`.
    pub fn constants(&self) -> Option<CertifiedConstants> {
        let c = self.map.constants()?;
        compute_constants(c.lipschitz, c.strong_monotonicity, self.family.rho(), self.mu).ok()
    }

    /// `B(x) = V(x) - P_{psi(x)}(V(x) - mu x)`.
    pub fn natural_map(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let v = self.map.eval(x)?;
        let target = linalg::axpy(&v, -self.mu, x);
        let p = self.family.project(x, &target);
        Ok(linalg::sub(&v, &p))
    }

    pub fn residual_norm(&self, x: &[f64]) -> Result<f64> {
        Ok(linalg::norm(&self.natural_map(x)?))
    }

    pub fn is_solution(&self, x: &[f64], tol: f64) -> Result<bool> {
        if !(tol > 0.0) {
            return Err(IqvipError::InvalidArgument(format!("tol must be positive, got {tol}")));
        }
        Ok(self.residual_norm(x)? <= tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::projections::ConstantFamily;

    // B(x) for the 2-D example by hand: V = Qx, clamp V - 2x into the box
    // spanned by 0 and x.
    fn clamp_oracle(x: [f64; 2]) -> [f64; 2] {
        let v = [3.4 * x[0] - 0.64 * x[1], 2.375 * x[0] + 0.8 * x[1]];
        let t = [v[0] - 2.0 * x[0], v[1] - 2.0 * x[1]];
        let c = |y: f64, b: f64| y.max(b.min(0.0)).min(b.max(0.0));
        [v[0] - c(t[0], x[0]), v[1] - c(t[1], x[1])]
    }

    #[test]
    fn natural_map_at_seven_five() {
        let p = builtin::example51();
        let b = p.natural_map(&[7.0, 5.0]).unwrap();
        assert!((b[0] - 14.0).abs() < 1e-12 && (b[1] - 15.625).abs() < 1e-12, "{b:?}");
        let o = clamp_oracle([7.0, 5.0]);
        assert!((b[0] - o[0]).abs() < 1e-12 && (b[1] - o[1]).abs() < 1e-12);
    }

    #[test]
    fn natural_map_vanishes_at_solution() {
        let p = builtin::example51();
        assert_eq!(p.natural_map(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(p.is_solution(&[0.0, 0.0], 1e-9).unwrap());
    }

    #[test]
    fn whole_space_constraint_gives_scaled_identity() {
        // P = id, so B(x) = V(x) - (V(x) - mu x) = mu x.
        let map = LinearMap::new(vec![vec![2.0, 1.0], vec![-1.0, 3.0]]).unwrap();
        let p = IqvipProblem::new(Arc::new(map), Arc::new(ConstantFamily::whole_space(2)), 0.5)
            .unwrap();
        for x in [[1.0, 2.0], [-3.5, 0.25], [1e3, -1e3]] {
            assert_eq!(p.natural_map(&x).unwrap(), vec![0.5 * x[0], 0.5 * x[1]]);
        }
        assert!(p.is_solution(&[0.0, 0.0], 1e-300).unwrap());
        assert!(!p.is_solution(&[1e-3, 0.0], 1e-9).unwrap());
    }

    #[test]
    fn tracking_singleton_constraint_has_zero_natural_map() {
        let p = builtin::free_motion(3);
        for x in [[1.0, 2.0, 3.0], [-3.5, 0.25, 8.0], [1e3, -1e3, 0.0]] {
            assert!(p.natural_map(&x).unwrap().iter().all(|&b| b == 0.0));
            assert!(p.is_solution(&x, 1e-12).unwrap());
        }
    }

    #[test]
    fn residual_norm_values() {
        let p = builtin::example51();
        let r = p.residual_norm(&[7.0, 5.0]).unwrap();
        assert!((r - (14.0f64.powi(2) + 15.625f64.powi(2)).sqrt()).abs() < 1e-12);
        assert!((r - 20.979).abs() < 1e-3);
        // At (1, 1): V = (2.76, 3.175), V - 2x = (0.76, 1.175) clamps to (0.76, 1),
        // so B = (2, 2.175).
        let o = clamp_oracle([1.0, 1.0]);
        assert!((o[0] - 2.0).abs() < 1e-12 && (o[1] - 2.175).abs() < 1e-12);
        let r11 = p.residual_norm(&[1.0, 1.0]).unwrap();
        assert!((r11 - (4.0f64 + 2.175f64.powi(2)).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn offset_point_is_not_a_solution() {
        let p = builtin::example51();
        assert!(!p.is_solution(&[7.0, 5.0], 1e-9).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = builtin::example51();
        assert!(matches!(
            p.natural_map(&[1.0, 2.0, 3.0]),
            Err(IqvipError::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn nonpositive_tolerance_is_rejected() {
        let p = builtin::example51();
        assert!(p.is_solution(&[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn wrong_declared_solution_is_rejected() {
        let p = builtin::example51();
        assert!(p.with_known_solution(vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn eta_above_lipschitz_is_rejected() {
        assert!(MapConstants::new(1.0, 2.0).is_err());
        assert!(MapConstants::new(1.0, 0.0).is_err());
    }
}
