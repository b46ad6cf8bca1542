use serde::{Deserialize, Serialize};

use super::MonteCarloResult;
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::frontier::{ConcentrationRatio, FrontierParams};
use crate::inference::asymptotic_variances;
use crate::stats;

pub const MIN_HISTOGRAM_REPS: usize = 100;
const MIN_BINS: usize = 10;
const MAX_BINS: usize = 10_000;
const DENSITY_POINTS: usize = 2001;

/// One of the three frontier parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Param {
    R,
    V,
    #[serde(rename = "s")]
    S,
}

impl Param {
    pub const ALL: [Param; 3] = [Param::R, Param::V, Param::S];

    pub fn value(self, fp: &FrontierParams) -> f64 {
        match self {
            Param::R => fp.r_gmv,
            Param::V => fp.v_gmv,
            Param::S => fp.slope,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::R => "R",
            Param::V => "V",
            Param::S => "s",
        }
    }
}

impl std::fmt::Display for Param {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "R" | "r" => Ok(Param::R),
            "V" | "v" => Ok(Param::V),
            "s" | "S" => Ok(Param::S),
            other => Err(Error::InvalidInput(format!("unknown parameter '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramData {
    pub param: Param,
    /// `sqrt(n) (theta_c - theta)` per replication.
    pub values: Vec<f64>,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Limiting normal density of the values, on a grid wide enough to
    /// carry all of its mass.
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub center: f64,
    pub variance: f64,
}

/// Freedman-Diaconis bin count, at least ten.
pub(crate) fn fd_bins(sorted: &[f64]) -> usize {
    let range = sorted[sorted.len() - 1] - sorted[0];
    let iqr = stats::quantile_sorted(sorted, 0.75) - stats::quantile_sorted(sorted, 0.25);
    let width = 2.0 * iqr / (sorted.len() as f64).cbrt();
    if !(width > 0.0) || !(range > 0.0) {
        return MIN_BINS;
    }
    ((range / width).ceil() as usize).clamp(MIN_BINS, MAX_BINS)
}

/// Histogram of the scaled consistent-estimator errors with the limiting
/// normal density. The slope errors are taken around the true `s`, so their
/// limiting law is centered at `sqrt(n) p/n`.
pub fn histogram_data(result: &MonteCarloResult, param: Param) -> Result<HistogramData> {
    let est = result.params(EstimatorKind::Consistent);
    if est.len() < MIN_HISTOGRAM_REPS {
        return Err(Error::TooFewReps {
            required: MIN_HISTOGRAM_REPS,
            got: est.len(),
        });
    }
    let (p, n) = (result.spec.p, result.spec.n);
    let ratio = ConcentrationRatio::from_dims(p, n)?;
    let rn = (n as f64).sqrt();
    let truth = param.value(&result.truth);
    let values: Vec<f64> = est.iter().map(|fp| rn * (param.value(fp) - truth)).collect();

    let vars = asymptotic_variances(result.truth, ratio);
    let variance = match param {
        Param::R => vars.var_r,
        Param::V => vars.var_v,
        Param::S => vars.var_s,
    };
    let center = if param == Param::S { rn * ratio.value() } else { 0.0 };

    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let bins = fd_bins(&sorted);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { lo + width * bins as f64 } else { lo + width * i as f64 })
        .collect();
    let mut counts = vec![0usize; bins];
    for &v in &values {
        let idx = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }

    let sd = variance.sqrt();
    let g_lo = lo.min(center - 8.0 * sd);
    let g_hi = hi.max(center + 8.0 * sd);
    let step = (g_hi - g_lo) / (DENSITY_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..DENSITY_POINTS).map(|i| g_lo + step * i as f64).collect();
    let density = grid.iter().map(|&x| stats::normal_pdf((x - center) / sd) / sd).collect();

    Ok(HistogramData {
        param,
        values,
        edges,
        counts,
        grid,
        density,
        center,
        variance,
    })
}
