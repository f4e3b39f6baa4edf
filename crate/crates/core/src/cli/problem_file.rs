//! JSON problem documents for affine maps `V(x) = A x + c`.
//!
//! ```json
//! {
//!   "matrix": [[3.4, -0.64], [2.375, 0.8]],
//!   "lipschitz": 2.2, "eta": 2.0,
//!   "mu": 2.0,
//!   "family": {"kind": "span_box"},
//!   "solution": [0.0, 0.0]
//! }
//! ```
//!
//! `family.kind` is one of `span_box`, `whole_space`, `box` (`lower`,
//! `upper`), `ball` (`center`, `radius`), or `moving_box` (`lower`, `upper`,
//! `scale`, the box translated by `scale * x`).

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{IqvipError, Result};
use crate::problem::{IqvipProblem, LinearMap};
use crate::projections::{Ball, BoxSet, ConstantFamily, MovingSet, ProjectorFamily, SpanBoxFamily};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub mu: f64,
    pub family: FamilySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    SpanBox,
    WholeSpace,
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    MovingBox { lower: Vec<f64>, upper: Vec<f64>, scale: f64 },
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Builds the problem, overriding `mu` when given.
    pub fn build(&self, mu: Option<f64>) -> Result<IqvipProblem> {
        let dim = self.matrix.len();
        let mut map = LinearMap::new(self.matrix.clone())?;
        if let Some(c) = &self.offset {
            map = map.with_offset(c.clone())?;
        }
        match (self.lipschitz, self.eta) {
            (Some(l), Some(eta)) => map = map.with_constants(l, eta)?,
            (None, None) => {}
            _ => {
                return Err(IqvipError::InvalidConfig(
                    "give both `lipschitz` and `eta`, or neither".into(),
                ))
            }
        }
        let family: Arc<dyn ProjectorFamily> = match &self.family {
            FamilySpec::SpanBox => Arc::new(SpanBoxFamily::new(dim)),
            FamilySpec::WholeSpace => Arc::new(ConstantFamily::whole_space(dim)),
            FamilySpec::Box { lower, upper } => {
                Arc::new(ConstantFamily::new(Arc::new(BoxSet::new(lower.clone(), upper.clone())?)))
            }
            FamilySpec::Ball { center, radius } => {
                Arc::new(ConstantFamily::new(Arc::new(Ball::new(center.clone(), *radius)?)))
            }
            FamilySpec::MovingBox { lower, upper, scale } => Arc::new(MovingSet::linear(
                Arc::new(BoxSet::new(lower.clone(), upper.clone())?),
                *scale,
            )?),
        };
        if family.dim() != dim {
            return Err(IqvipError::DimensionMismatch { expected: dim, got: family.dim() });
        }
        let problem = IqvipProblem::new(Arc::new(map), family, mu.unwrap_or(self.mu))?;
        match &self.solution {
            Some(s) => problem.with_known_solution(s.clone()),
            None => Ok(problem),
        }
    }
}
