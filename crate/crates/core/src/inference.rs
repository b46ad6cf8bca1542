//! Asymptotic normality of the consistent estimators and the marginal
//! confidence intervals built from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimateReport;
use crate::frontier::{ConcentrationRatio, FrontierParams};
use crate::stats::normal_quantile;

/// Limiting variances of `sqrt(n)` times the estimation errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticVariances {
    pub var_r: f64,
    pub var_v: f64,
    pub var_s: f64,
}

pub fn asymptotic_variances(fp: FrontierParams, ratio: ConcentrationRatio) -> AsymptoticVariances {
    variances_at(fp, ratio.value()).expect("ratio already validated")
}

/// Same as [`asymptotic_variances`] but also accepts `c = 0`, the
/// classical fixed-dimension limit.
pub fn variances_at(fp: FrontierParams, c: f64) -> Result<AsymptoticVariances> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::RatioOutOfRange(c));
    }
    let (s, v) = (fp.slope, fp.v_gmv);
    Ok(AsymptoticVariances {
        var_r: (1.0 + (s + c) / (1.0 - c)) * v,
        var_v: 2.0 * v * v / (1.0 - c),
        var_s: 2.0 * (c + 2.0 * s) + 2.0 * (c + s) * (c + s) / (1.0 - c),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceIntervals {
    pub level: f64,
    pub ci_r: (f64, f64),
    pub ci_v: (f64, f64),
    pub ci_s: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CiOptions {
    /// Center the slope interval at `s_c - p/n` and plug that value into its
    /// variance, matching the centering of the limit theorem.
    pub center_s_bias: bool,
}

pub fn confidence_intervals(report: &EstimateReport, level: f64) -> Result<ConfidenceIntervals> {
    confidence_intervals_with(report, level, CiOptions::default())
}

/// Marginal intervals `estimate +- z_{1-alpha/2} / sqrt(n) * sd`, with the
/// standard deviations evaluated at the report's own estimates.
pub fn confidence_intervals_with(
    report: &EstimateReport,
    level: f64,
    opts: CiOptions,
) -> Result<ConfidenceIntervals> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    let c = ConcentrationRatio::new(report.ratio)?.value();
    let z = normal_quantile(1.0 - (1.0 - level) / 2.0)?;
    let half = z / (report.n as f64).sqrt();
    let fp = report.params;
    let vars = variances_at(fp, c)?;

    let (s_center, var_s) = if opts.center_s_bias {
        let s = fp.slope - c;
        let debiased = FrontierParams { slope: s.max(0.0), ..fp };
        (s, variances_at(debiased, c)?.var_s)
    } else {
        (fp.slope, vars.var_s)
    };

    let interval = |center: f64, var: f64| {
        let w = half * var.sqrt();
        (center - w, center + w)
    };
    Ok(ConfidenceIntervals {
        level,
        ci_r: interval(fp.r_gmv, vars.var_r),
        ci_v: interval(fp.v_gmv, vars.var_v),
        ci_s: interval(s_center, var_s),
    })
}

/// Errors of a consistent report scaled to unit asymptotic variance,
/// with the slope centered at `s + p/n`.
pub fn standardized_errors(
    report: &EstimateReport,
    truth: FrontierParams,
    ratio: ConcentrationRatio,
    n: usize,
) -> [f64; 3] {
    let vars = asymptotic_variances(truth, ratio);
    let rn = (n as f64).sqrt();
    let est = report.params;
    [
        rn * (est.r_gmv - truth.r_gmv) / vars.var_r.sqrt(),
        rn * (est.v_gmv - truth.v_gmv) / vars.var_v.sqrt(),
        rn * (est.slope - truth.slope - report.p as f64 / report.n as f64) / vars.var_s.sqrt(),
    ]
}
