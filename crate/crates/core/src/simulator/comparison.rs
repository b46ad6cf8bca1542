use serde::{Deserialize, Serialize};

use super::{generate, Population, ScenarioSpec};
use crate::error::{Error, Result};
use crate::estimators::{estimate_all, sample_moments, EstimatorKind};
use crate::frontier::{self, FrontierParams};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierCurve {
    /// `None` for the population frontier.
    pub kind: Option<EstimatorKind>,
    pub params: FrontierParams,
    /// Upper-branch return at each grid variance; `None` left of the vertex.
    pub r: Vec<Option<f64>>,
}

impl FrontierCurve {
    pub fn label(&self) -> &'static str {
        self.kind.map_or("population", EstimatorKind::name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierComparison {
    pub grid: Vec<f64>,
    pub population: FrontierCurve,
    pub curves: Vec<FrontierCurve>,
}

/// `Some(true)` if `a` lies strictly above `b`; a missing value counts as
/// lying below every curve. `None` when neither curve reaches the point.
pub(crate) fn above(a: Option<f64>, b: Option<f64>) -> Option<bool> {
    match (a, b) {
        (None, None) => None,
        (Some(_), None) => Some(true),
        (None, Some(_)) => Some(false),
        (Some(x), Some(y)) => Some(x > y),
    }
}

impl FrontierComparison {
    pub fn curve(&self, kind: EstimatorKind) -> Option<&FrontierCurve> {
        self.curves.iter().find(|c| c.kind == Some(kind))
    }

    /// Whether `upper` lies above `lower` at every grid point either reaches.
    pub fn lies_above(&self, upper: &FrontierCurve, lower: &FrontierCurve) -> bool {
        upper
            .r
            .iter()
            .zip(&lower.r)
            .all(|(&a, &b)| above(a, b).unwrap_or(true))
    }

    /// Comparison at the middle grid point.
    pub fn above_at_median(&self, upper: &FrontierCurve, lower: &FrontierCurve) -> Option<bool> {
        let mid = self.grid.len() / 2;
        above(upper.r[mid], lower.r[mid])
    }
}

/// Estimate the frontier with each kind on one simulated dataset and
/// evaluate all curves, plus the population frontier, on a common grid from
/// the smallest vertex variance to `v_max` (default twice the largest).
pub fn frontier_comparison(
    spec: &ScenarioSpec,
    kinds: &[EstimatorKind],
    v_max: Option<f64>,
    n_points: usize,
) -> Result<FrontierComparison> {
    if n_points < 2 {
        return Err(Error::InvalidRange(format!("n_points = {n_points} must be at least 2")));
    }
    let pop = Population::build(spec)?;
    let truth = frontier::frontier_params(&pop.mu, &pop.sigma)?;
    let mut rng = rng::stream(spec.seed, Domain::Frontier, 0);
    let y = generate(spec, &pop, &mut rng)?;
    let m = sample_moments(&y)?;
    let reports = estimate_all(&m, kinds).into_iter().collect::<Result<Vec<_>>>()?;

    let vertices = std::iter::once(truth.v_gmv).chain(reports.iter().map(|r| r.params.v_gmv));
    let (lo, hi) = vertices
        .filter(|v| *v > 0.0)
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let v_max = v_max.unwrap_or(2.0 * hi);
    if !(v_max > lo) {
        return Err(Error::InvalidRange(format!("v_max = {v_max} must exceed {lo}")));
    }
    let step = (v_max - lo) / (n_points - 1) as f64;
    let grid: Vec<f64> = (0..n_points)
        .map(|i| if i + 1 == n_points { v_max } else { lo + step * i as f64 })
        .collect();
    let curve = |kind, params: FrontierParams| FrontierCurve {
        kind,
        params,
        r: grid.iter().map(|&v| params.upper_return_at(v)).collect(),
    };
    Ok(FrontierComparison {
        population: curve(None, truth),
        curves: reports.iter().map(|r| curve(Some(r.kind), r.params)).collect(),
        grid,
    })
}
