//! Frontier estimators from a return sample.
//!
//! All `S^{-1}` based kinds (sample, consistent, unbiased, SSE, EBE) are
//! derived from the quadratic forms of one Cholesky factorization of the
//! sample covariance. RTE needs its own factorization of `(n-1)S + tr(S) I`.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDateTime;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontier::{self, CovarianceMatrix, FrontierParams, MeanVector, MertonConstants};
use crate::linalg::{QuadForms, SpdFactor};

/// Asset returns, one row per asset and one column per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsMatrix {
    values: DMatrix<f64>,
    asset_labels: Vec<String>,
    timestamps: Option<Vec<NaiveDateTime>>,
}

impl ReturnsMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let labels = (1..=values.nrows()).map(|i| format!("A{i}")).collect();
        Self::with_labels(values, labels)
    }

    pub fn with_labels(values: DMatrix<f64>, asset_labels: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::DimensionMismatch("returns matrix is empty".into()));
        }
        if asset_labels.len() != values.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} assets",
                asset_labels.len(),
                values.nrows()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("returns matrix"));
        }
        Ok(ReturnsMatrix {
            values,
            asset_labels,
            timestamps: None,
        })
    }

    pub fn with_timestamps(mut self, timestamps: Vec<NaiveDateTime>) -> Result<Self> {
        if timestamps.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} timestamps for {} observations",
                timestamps.len(),
                self.n()
            )));
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    /// Number of assets.
    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn asset_labels(&self) -> &[String] {
        &self.asset_labels
    }

    pub fn timestamps(&self) -> Option<&[NaiveDateTime]> {
        self.timestamps.as_deref()
    }
}

/// Normalization of the sample covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovDivisor {
    /// `(1/n) sum (y - ybar)(y - ybar)'`, the default.
    #[default]
    N,
    /// `(1/(n-1)) sum (y - ybar)(y - ybar)'`, the Wishart convention.
    NMinusOne,
}

impl CovDivisor {
    fn value(self, n: usize) -> f64 {
        match self {
            CovDivisor::N => n as f64,
            CovDivisor::NMinusOne => (n - 1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMoments {
    pub mean: MeanVector,
    pub cov: CovarianceMatrix,
    pub n: usize,
    pub p: usize,
    pub divisor: CovDivisor,
}

impl SampleMoments {
    /// Moments supplied directly, e.g. population values for plug-in checks.
    pub fn new(mean: MeanVector, cov: CovarianceMatrix, n: usize, divisor: CovDivisor) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {}, covariance is {}x{}",
                mean.len(),
                cov.dim(),
                cov.dim()
            )));
        }
        if n < 2 {
            return Err(Error::TooFewObservations(format!("n = {n}, need at least 2")));
        }
        let p = mean.len();
        Ok(SampleMoments { mean, cov, n, p, divisor })
    }

    pub fn ratio(&self) -> f64 {
        self.p as f64 / self.n as f64
    }

    /// The same moments re-expressed with another covariance divisor.
    pub fn with_divisor(&self, divisor: CovDivisor) -> SampleMoments {
        let k = self.divisor.value(self.n) / divisor.value(self.n);
        SampleMoments {
            mean: self.mean.clone(),
            cov: CovarianceMatrix::new(self.cov.as_matrix() * k).expect("rescaling keeps symmetry"),
            n: self.n,
            p: self.p,
            divisor,
        }
    }
}

pub fn sample_moments(y: &ReturnsMatrix) -> Result<SampleMoments> {
    sample_moments_with(y, CovDivisor::N)
}

pub fn sample_moments_with(y: &ReturnsMatrix, divisor: CovDivisor) -> Result<SampleMoments> {
    let n = y.n();
    if n < 2 {
        return Err(Error::TooFewObservations(format!("n = {n}, need at least 2")));
    }
    let values = y.values();
    let mean = values.column_mean();
    let mut centered = values.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let cov = (&centered * centered.transpose()) / divisor.value(n);
    SampleMoments::new(MeanVector::new(mean)?, CovarianceMatrix::new(cov)?, n, divisor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Sample,
    Consistent,
    Unbiased,
    Sse,
    Ebe,
    Rte,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Sample,
        EstimatorKind::Consistent,
        EstimatorKind::Unbiased,
        EstimatorKind::Sse,
        EstimatorKind::Ebe,
        EstimatorKind::Rte,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Sample => "sample",
            EstimatorKind::Consistent => "consistent",
            EstimatorKind::Unbiased => "unbiased",
            EstimatorKind::Sse => "sse",
            EstimatorKind::Ebe => "ebe",
            EstimatorKind::Rte => "rte",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown estimator kind '{s}'")))
    }
}

/// Parse a comma separated list such as `sample,consistent,rte`.
pub fn parse_kinds(list: &str) -> Result<Vec<EstimatorKind>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub kind: EstimatorKind,
    pub params: FrontierParams,
    pub merton: MertonConstants,
    pub p: usize,
    pub n: usize,
    pub ratio: f64,
    /// Set when an unbiased slope estimate came out negative. The value is
    /// reported unclamped.
    pub negative_slope: bool,
}

impl EstimateReport {
    fn from_forms(kind: EstimatorKind, forms: QuadForms, p: usize, n: usize) -> Result<Self> {
        let merton = MertonConstants::from(forms);
        Ok(EstimateReport {
            kind,
            params: frontier::from_merton(merton)?,
            merton,
            p,
            n,
            ratio: p as f64 / n as f64,
            negative_slope: false,
        })
    }
}

fn require_invertible(m: &SampleMoments) -> Result<()> {
    if m.n <= m.p {
        return Err(Error::SingularCovariance { p: m.p, n: m.n });
    }
    Ok(())
}

fn factor_cov(m: &SampleMoments) -> Result<SpdFactor> {
    require_invertible(m)?;
    m.cov
        .factor()
        .map_err(|_| Error::SingularCovariance { p: m.p, n: m.n })
}

/// `(ybar' S^-1 ybar, 1' S^-1 ybar, 1' S^-1 1)` from one factorization.
pub fn sample_forms(m: &SampleMoments) -> Result<QuadForms> {
    Ok(factor_cov(m)?.inverse_forms(m.mean.as_vector()))
}

fn ratio_below_one(m: &SampleMoments) -> Result<f64> {
    let c = m.ratio();
    if c >= 1.0 {
        return Err(Error::RatioOutOfRange(c));
    }
    Ok(c)
}

pub fn sample_frontier(m: &SampleMoments) -> Result<EstimateReport> {
    EstimateReport::from_forms(EstimatorKind::Sample, sample_forms(m)?, m.p, m.n)
}

pub fn consistent_frontier(m: &SampleMoments) -> Result<EstimateReport> {
    ratio_below_one(m)?;
    consistent_from_forms(m, sample_forms(m)?)
}

fn consistent_from_forms(m: &SampleMoments, forms: QuadForms) -> Result<EstimateReport> {
    let c = ratio_below_one(m)?;
    let mut report = EstimateReport::from_forms(EstimatorKind::Consistent, forms.scaled(1.0 - c), m.p, m.n)?;
    // Set the corrected values directly so they equal the textbook factors
    // exactly instead of up to rounding through the Merton route.
    let plain = frontier::from_merton(forms.into())?;
    report.params = FrontierParams {
        r_gmv: plain.r_gmv,
        v_gmv: plain.v_gmv / (1.0 - c),
        slope: (1.0 - c) * plain.slope,
    };
    Ok(report)
}

/// Consistent Merton constants: the sample forms times `1 - p/n`.
pub fn consistent_merton(m: &SampleMoments) -> Result<MertonConstants> {
    let c = ratio_below_one(m)?;
    Ok(sample_forms(m)?.scaled(1.0 - c).into())
}

/// Finite-sample unbiased estimators under Gaussian sampling.
///
/// The correction factors are exact for the Wishart convention, i.e. for a
/// covariance with divisor `n - 1`; moments with divisor `n` are converted
/// first.
pub fn unbiased_frontier(m: &SampleMoments) -> Result<EstimateReport> {
    if m.n <= m.p + 1 {
        return Err(Error::TooFewObservations(format!(
            "unbiased estimators need n > p + 1 (p = {}, n = {})",
            m.p, m.n
        )));
    }
    unbiased_from_forms(m, sample_forms(m)?)
}

fn unbiased_from_forms(m: &SampleMoments, forms: QuadForms) -> Result<EstimateReport> {
    let (p, n) = (m.p as f64, m.n as f64);
    // S^-1 forms scale inversely with the divisor.
    let to_wishart = CovDivisor::NMinusOne.value(m.n) / m.divisor.value(m.n);
    let plain = frontier::from_merton(forms.scaled(to_wishart).into())?;
    let params = FrontierParams {
        r_gmv: plain.r_gmv,
        v_gmv: (n - 1.0) / (n - p) * plain.v_gmv,
        slope: (n - p - 1.0) / (n - 1.0) * plain.slope - (p - 1.0) / n,
    };
    Ok(EstimateReport {
        kind: EstimatorKind::Unbiased,
        params,
        merton: MertonConstants {
            a: params.slope + params.r_gmv * params.r_gmv / params.v_gmv,
            b: params.r_gmv / params.v_gmv,
            c_m: 1.0 / params.v_gmv,
        },
        p: m.p,
        n: m.n,
        ratio: p / n,
        negative_slope: params.slope < 0.0,
    })
}

fn require_sse(m: &SampleMoments) -> Result<()> {
    if m.n <= m.p + 2 {
        return Err(Error::TooFewObservations(format!(
            "this estimator needs n > p + 2 (p = {}, n = {})",
            m.p, m.n
        )));
    }
    Ok(())
}

fn sse_factor(m: &SampleMoments) -> f64 {
    (m.n - m.p - 2) as f64 / (m.n - 1) as f64
}

fn ebe_ridge(m: &SampleMoments) -> Result<f64> {
    let tr = m.cov.trace();
    if !(tr > 0.0) {
        return Err(Error::ZeroTrace);
    }
    let p = m.p as f64;
    Ok((p * p + p - 2.0) / ((m.n - 1) as f64 * tr))
}

/// Scaled sample precision `((n-p-2)/(n-1)) S^-1`.
pub fn precision_sse(m: &SampleMoments) -> Result<DMatrix<f64>> {
    require_sse(m)?;
    Ok(factor_cov(m)?.inverse() * sse_factor(m))
}

/// Empirical Bayes precision: SSE plus a ridge `((p^2+p-2)/((n-1) tr S)) I`.
pub fn precision_ebe(m: &SampleMoments) -> Result<DMatrix<f64>> {
    require_sse(m)?;
    let ridge = ebe_ridge(m)?;
    let mut out = precision_sse(m)?;
    for i in 0..m.p {
        out[(i, i)] += ridge;
    }
    Ok(out)
}

fn rte_matrix(m: &SampleMoments) -> Result<DMatrix<f64>> {
    let tr = m.cov.trace();
    if !(tr > 0.0) {
        return Err(Error::ZeroTrace);
    }
    let mut a = m.cov.as_matrix() * (m.n - 1) as f64;
    for i in 0..m.p {
        a[(i, i)] += tr;
    }
    Ok(a)
}

/// Ridge-type precision `p ((n-1) S + tr(S) I)^-1`; defined for singular `S`.
pub fn precision_rte(m: &SampleMoments) -> Result<DMatrix<f64>> {
    let factor = SpdFactor::new(rte_matrix(m)?).ok_or(Error::NotPositiveDefinite)?;
    Ok(factor.inverse() * m.p as f64)
}

fn rte_forms(m: &SampleMoments) -> Result<QuadForms> {
    let factor = SpdFactor::new(rte_matrix(m)?).ok_or(Error::NotPositiveDefinite)?;
    Ok(factor.inverse_forms(m.mean.as_vector()).scaled(m.p as f64))
}

/// Frontier with `Sigma^-1` replaced by `precision` and `mu` by `mean`.
pub fn plugin_frontier(
    precision: &DMatrix<f64>,
    mean: &MeanVector,
    kind: EstimatorKind,
    n: usize,
) -> Result<EstimateReport> {
    let p = mean.len();
    if precision.nrows() != p || precision.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "precision is {}x{}, mean has length {p}",
            precision.nrows(),
            precision.ncols()
        )));
    }
    let sym = crate::linalg::symmetrize(precision.clone()).map_err(|_| Error::NotPositiveDefinite)?;
    let factor = SpdFactor::new(sym).ok_or(Error::NotPositiveDefinite)?;
    EstimateReport::from_forms(kind, factor.direct_forms(mean.as_vector()), p, n)
}

/// Forms of the SSE and EBE precisions from the sample forms, without
/// forming either matrix.
fn shrunk_forms(m: &SampleMoments, forms: QuadForms, ridge: f64) -> QuadForms {
    let k = sse_factor(m);
    let ybar = m.mean.as_vector();
    QuadForms {
        a: k * forms.a + ridge * ybar.dot(ybar),
        b: k * forms.b + ridge * ybar.sum(),
        c: k * forms.c + ridge * m.p as f64,
    }
}

pub fn estimate(m: &SampleMoments, kind: EstimatorKind) -> Result<EstimateReport> {
    estimate_all(m, &[kind]).pop().expect("one kind requested")
}

/// Run several estimators on the same moments, sharing the factorization of
/// the sample covariance.
pub fn estimate_all(m: &SampleMoments, kinds: &[EstimatorKind]) -> Vec<Result<EstimateReport>> {
    let needs_forms = kinds.iter().any(|k| *k != EstimatorKind::Rte);
    let forms = if needs_forms { Some(sample_forms(m)) } else { None };
    kinds
        .iter()
        .map(|&kind| {
            if kind == EstimatorKind::Rte {
                return EstimateReport::from_forms(kind, rte_forms(m)?, m.p, m.n);
            }
            let forms = forms.clone().expect("computed above")?;
            match kind {
                EstimatorKind::Sample => EstimateReport::from_forms(kind, forms, m.p, m.n),
                EstimatorKind::Consistent => consistent_from_forms(m, forms),
                EstimatorKind::Unbiased => {
                    if m.n <= m.p + 1 {
                        return unbiased_frontier(m);
                    }
                    unbiased_from_forms(m, forms)
                }
                EstimatorKind::Sse => {
                    require_sse(m)?;
                    EstimateReport::from_forms(kind, shrunk_forms(m, forms, 0.0), m.p, m.n)
                }
                EstimatorKind::Ebe => {
                    require_sse(m)?;
                    EstimateReport::from_forms(kind, shrunk_forms(m, forms, ebe_ridge(m)?), m.p, m.n)
                }
                EstimatorKind::Rte => unreachable!(),
            }
        })
        .collect()
}

/// Convenience used by tests and the CLI: population moments as if sampled.
pub fn population_moments(mu: &MeanVector, sigma: &CovarianceMatrix, n: usize) -> Result<SampleMoments> {
    SampleMoments::new(mu.clone(), sigma.clone(), n, CovDivisor::N)
}

/// Column vector of ones, used in several oracles.
#[cfg(test)]
pub(crate) fn ones(p: usize) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_element(p, 1.0)
}
