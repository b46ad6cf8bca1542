use serde::{Deserialize, Serialize};

use super::{generate, histogram::Param, Population, ScenarioSpec};
use crate::error::{Error, Result};
use crate::estimators::{estimate_all, sample_moments_with, CovDivisor, EstimateReport, EstimatorKind};
use crate::frontier::{self, FrontierParams};
use crate::parallel::{map_indexed, Execution};
use crate::rng::{self, Domain};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct McOptions {
    /// Covariance normalization used for every replication.
    #[serde(default)]
    pub divisor: CovDivisor,
    #[serde(default)]
    pub exec: Execution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub kind: EstimatorKind,
    pub param: Param,
    pub mean_loss: f64,
    pub q05: f64,
    pub q95: f64,
    /// Replications that produced an estimate.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub spec: ScenarioSpec,
    pub reps: usize,
    pub kinds: Vec<EstimatorKind>,
    pub truth: FrontierParams,
    /// `estimates[k][r]` is the report of `kinds[k]` on replication `r`.
    pub estimates: Vec<Vec<Option<EstimateReport>>>,
    /// Failed replications per kind, with the first error seen.
    pub failures: Vec<(usize, Option<Error>)>,
    pub losses: Vec<LossSummary>,
}

impl MonteCarloResult {
    fn kind_index(&self, kind: EstimatorKind) -> Option<usize> {
        self.kinds.iter().position(|&k| k == kind)
    }

    /// Successful estimates of one kind in replication order.
    pub fn params(&self, kind: EstimatorKind) -> Vec<FrontierParams> {
        self.kind_index(kind)
            .map(|k| self.estimates[k].iter().flatten().map(|r| r.params).collect())
            .unwrap_or_default()
    }

    /// Per-replication `(R_c, V_c, s_c)` of the consistent estimator.
    pub fn triples(&self) -> Vec<FrontierParams> {
        self.params(EstimatorKind::Consistent)
    }

    pub fn loss(&self, kind: EstimatorKind, param: Param) -> Option<&LossSummary> {
        self.losses.iter().find(|l| l.kind == kind && l.param == param)
    }
}

fn summarize(kind: EstimatorKind, param: Param, est: &[FrontierParams], truth: FrontierParams) -> LossSummary {
    let mut losses: Vec<f64> = est
        .iter()
        .map(|fp| {
            let d = param.value(fp) - param.value(&truth);
            d * d
        })
        .collect();
    losses.sort_by(f64::total_cmp);
    let (mean_loss, q05, q95) = if losses.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        (
            stats::mean(&losses),
            stats::quantile_sorted(&losses, 0.05),
            stats::quantile_sorted(&losses, 0.95),
        )
    };
    LossSummary {
        kind,
        param,
        mean_loss,
        q05,
        q95,
        count: losses.len(),
    }
}

/// Simulate `reps` datasets of `spec` and apply every estimator in `kinds`.
///
/// Replication `r` draws from its own stream, so results do not depend on
/// the execution strategy. Estimator failures are counted, not fatal.
pub fn run_monte_carlo(
    spec: &ScenarioSpec,
    reps: usize,
    kinds: &[EstimatorKind],
    opts: McOptions,
) -> Result<MonteCarloResult> {
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be at least 1".into()));
    }
    let pop = Population::build(spec)?;
    let truth = frontier::frontier_params(&pop.mu, &pop.sigma)?;

    let per_rep: Vec<Result<Vec<Result<EstimateReport>>>> = map_indexed(opts.exec, reps, |r| {
        let mut rng = rng::stream(spec.seed, Domain::Replication, r as u64);
        let y = generate(spec, &pop, &mut rng)?;
        let m = sample_moments_with(&y, opts.divisor)?;
        Ok(estimate_all(&m, kinds))
    });

    let mut estimates = vec![Vec::with_capacity(reps); kinds.len()];
    let mut failures: Vec<(usize, Option<Error>)> = vec![(0, None); kinds.len()];
    for rep in per_rep {
        let rep = rep?;
        for (k, res) in rep.into_iter().enumerate() {
            match res {
                Ok(r) => estimates[k].push(Some(r)),
                Err(e) => {
                    estimates[k].push(None);
                    failures[k].0 += 1;
                    failures[k].1.get_or_insert(e);
                }
            }
        }
    }
    for (k, (count, err)) in failures.iter().enumerate() {
        if let Some(e) = err {
            log::warn!("{}: {count} of {reps} replications failed ({e})", kinds[k]);
        }
    }

    let mut losses = Vec::with_capacity(3 * kinds.len());
    for (k, &kind) in kinds.iter().enumerate() {
        let est: Vec<FrontierParams> = estimates[k].iter().flatten().map(|r| r.params).collect();
        for param in Param::ALL {
            losses.push(summarize(kind, param, &est, truth));
        }
    }

    Ok(MonteCarloResult {
        spec: spec.clone(),
        reps,
        kinds: kinds.to_vec(),
        truth,
        estimates,
        failures,
        losses,
    })
}

/// One line of a loss-curve table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub p: usize,
    pub n: usize,
    pub c: f64,
    pub scenario: String,
    pub estimator: EstimatorKind,
    pub param: Param,
    pub mean_loss: f64,
    pub q05: f64,
    pub q95: f64,
}

/// Quadratic losses along a grid of dimensions at fixed `c = p/n`.
pub fn loss_curve(
    base: &ScenarioSpec,
    c: f64,
    p_grid: &[usize],
    reps: usize,
    kinds: &[EstimatorKind],
    opts: McOptions,
) -> Result<Vec<LossRow>> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::RatioOutOfRange(c));
    }
    let mut rows = Vec::new();
    for &p in p_grid {
        let n = (p as f64 / c).round() as usize;
        let spec = ScenarioSpec { p, n, ..base.clone() };
        let res = run_monte_carlo(&spec, reps, kinds, opts)?;
        rows.extend(res.losses.iter().map(|l| LossRow {
            p,
            n,
            c,
            scenario: spec.kind.name().into(),
            estimator: l.kind,
            param: l.param,
            mean_loss: l.mean_loss,
            q05: l.q05,
            q95: l.q95,
        }));
    }
    Ok(rows)
}
