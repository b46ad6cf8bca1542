//! Synthetic data-generating processes and the Monte Carlo engine.

mod comparison;
mod generators;
mod histogram;
mod monte_carlo;
pub mod output;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontier::{CovarianceMatrix, MeanVector};
use crate::rng::{self, Domain};

pub use comparison::{frontier_comparison, FrontierComparison, FrontierCurve};
pub use generators::{generate, generate_ccc_garch, generate_normal, generate_t3, GarchState, GARCH_BURN_IN};
pub use histogram::{histogram_data, HistogramData, Param};
pub use monte_carlo::{loss_curve, run_monte_carlo, LossRow, LossSummary, McOptions, MonteCarloResult};

/// Population eigenvalues as `(fraction, eigenvalue)` groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSpec {
    pub proportions: Vec<(f64, f64)>,
}

impl Default for SpectrumSpec {
    fn default() -> Self {
        SpectrumSpec {
            proportions: vec![(0.2, 0.5), (0.4, 1.0), (0.4, 5.0)],
        }
    }
}

impl SpectrumSpec {
    pub fn validate(&self) -> Result<()> {
        if self.proportions.is_empty() {
            return Err(Error::InvalidSpectrum("no eigenvalue groups".into()));
        }
        if self.proportions.iter().any(|&(f, l)| !(f >= 0.0) || !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidSpectrum(
                "fractions must be nonnegative and eigenvalues positive".into(),
            ));
        }
        let total: f64 = self.proportions.iter().map(|&(f, _)| f).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpectrum(format!("fractions sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Group sizes `round(fraction * p)`, with the last group taking the remainder.
    pub fn multiplicities(&self, p: usize) -> Result<Vec<usize>> {
        self.validate()?;
        let k = self.proportions.len();
        let mut out: Vec<usize> = self.proportions[..k - 1]
            .iter()
            .map(|&(f, _)| (f * p as f64).round() as usize)
            .collect();
        let used: usize = out.iter().sum();
        if used > p {
            return Err(Error::InvalidSpectrum(format!("rounded groups exceed p = {p}")));
        }
        out.push(p - used);
        Ok(out)
    }

    pub fn eigenvalues(&self, p: usize) -> Result<Vec<f64>> {
        let mult = self.multiplicities(p)?;
        Ok(mult
            .iter()
            .zip(&self.proportions)
            .flat_map(|(&m, &(_, l))| std::iter::repeat_n(l, m))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Normal,
    #[serde(rename = "t3")]
    StudentT3,
    CccGarch,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Normal => "normal",
            ScenarioKind::StudentT3 => "t3",
            ScenarioKind::CccGarch => "ccc-garch",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(ScenarioKind::Normal),
            "t3" | "student-t3" | "studentt3" => Ok(ScenarioKind::StudentT3),
            "ccc-garch" | "garch" | "cccgarch" => Ok(ScenarioKind::CccGarch),
            other => Err(Error::InvalidInput(format!("unknown scenario '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanLaw {
    pub low: f64,
    pub high: f64,
}

impl Default for MeanLaw {
    fn default() -> Self {
        MeanLaw { low: -0.2, high: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchSpec {
    pub alpha1_range: (f64, f64),
    pub beta1_range: (f64, f64),
}

impl Default for GarchSpec {
    fn default() -> Self {
        GarchSpec {
            alpha1_range: (0.0, 0.1),
            beta1_range: (0.8, 0.89),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub p: usize,
    pub n: usize,
    #[serde(default)]
    pub spectrum: SpectrumSpec,
    #[serde(default)]
    pub mean_law: MeanLaw,
    #[serde(default)]
    pub garch: Option<GarchSpec>,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, p: usize, n: usize, seed: u64) -> Self {
        ScenarioSpec {
            kind,
            p,
            n,
            spectrum: SpectrumSpec::default(),
            mean_law: MeanLaw::default(),
            garch: (kind == ScenarioKind::CccGarch).then(GarchSpec::default),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::InvalidInput(format!("p = {} must be at least 2", self.p)));
        }
        if self.n < 2 {
            return Err(Error::TooFewObservations(format!("n = {}", self.n)));
        }
        self.spectrum.validate()?;
        if !(self.mean_law.low <= self.mean_law.high) {
            return Err(Error::InvalidRange(format!(
                "mean law [{}, {}]",
                self.mean_law.low, self.mean_law.high
            )));
        }
        if let Some(g) = self.garch_spec() {
            for (name, (lo, hi)) in [("alpha1", g.alpha1_range), ("beta1", g.beta1_range)] {
                if !(0.0 <= lo && lo <= hi && hi < 1.0) {
                    return Err(Error::InvalidRange(format!("{name} range [{lo}, {hi}]")));
                }
            }
        }
        Ok(())
    }

    fn garch_spec(&self) -> Option<GarchSpec> {
        match self.kind {
            ScenarioKind::CccGarch => Some(self.garch.unwrap_or_default()),
            _ => None,
        }
    }
}

/// Population mean and covariance: diagonal `Sigma` with the requested
/// spectrum and i.i.d. uniform means drawn from the seed.
pub fn build_population(spec: &ScenarioSpec) -> Result<(MeanVector, CovarianceMatrix)> {
    spec.validate()?;
    let eig = spec.spectrum.eigenvalues(spec.p)?;
    let mut rng = rng::stream(spec.seed, Domain::Population, 0);
    let law = spec.mean_law;
    let mu: Vec<f64> = (0..spec.p)
        .map(|_| if law.low < law.high { rng.random_range(law.low..law.high) } else { law.low })
        .collect();
    Ok((MeanVector::from_slice(&mu)?, CovarianceMatrix::diagonal(&eig)?))
}

/// Square root used to color white noise: `Y = root X + mu`.
#[derive(Debug, Clone)]
pub(crate) enum Root {
    Diagonal(DVector<f64>),
    Lower(DMatrix<f64>),
}

impl Root {
    fn of(sigma: &CovarianceMatrix) -> Result<Root> {
        let m = sigma.as_matrix();
        if sigma.is_diagonal() {
            if m.diagonal().iter().any(|&d| !(d > 0.0)) {
                return Err(Error::CholeskyFailure);
            }
            Ok(Root::Diagonal(m.diagonal().map(f64::sqrt)))
        } else {
            let chol = nalgebra::Cholesky::new(m.clone()).ok_or(Error::CholeskyFailure)?;
            Ok(Root::Lower(chol.l()))
        }
    }

    /// `root * x + mu 1'` in place where possible.
    fn color(&self, mut x: DMatrix<f64>, mu: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Root::Diagonal(d) => {
                for mut col in x.column_iter_mut() {
                    col.component_mul_assign(d);
                    col += mu;
                }
                x
            }
            Root::Lower(l) => {
                let mut y = l * x;
                for mut col in y.column_iter_mut() {
                    col += mu;
                }
                y
            }
        }
    }
}

/// Per-asset GARCH(1,1) coefficients shared by all replications of a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct GarchParams {
    pub alpha0: DVector<f64>,
    pub alpha1: DVector<f64>,
    pub beta1: DVector<f64>,
    /// Lower Cholesky factor of the constant correlation matrix.
    pub corr_root: DMatrix<f64>,
    pub corr: DMatrix<f64>,
}

impl GarchParams {
    fn draw(spec: &GarchSpec, sigma: &CovarianceMatrix, seed: u64) -> Result<Self> {
        let p = sigma.dim();
        let mut rng = rng::stream(seed, Domain::GarchParams, 0);
        let mut draw = |(lo, hi): (f64, f64)| if lo < hi { rng.random_range(lo..hi) } else { lo };
        let mut alpha1 = DVector::zeros(p);
        let mut beta1 = DVector::zeros(p);
        for i in 0..p {
            alpha1[i] = draw(spec.alpha1_range);
            beta1[i] = draw(spec.beta1_range);
        }
        Self::from_coefficients(sigma, alpha1, beta1)
    }

    /// `alpha0 = Sigma_ii (1 - alpha1 - beta1)` so that the unconditional
    /// variance of asset `i` is `Sigma_ii`.
    pub fn from_coefficients(sigma: &CovarianceMatrix, alpha1: DVector<f64>, beta1: DVector<f64>) -> Result<Self> {
        let m = sigma.as_matrix();
        let p = m.nrows();
        for i in 0..p {
            let persistence = alpha1[i] + beta1[i];
            if !(alpha1[i] >= 0.0 && beta1[i] >= 0.0 && persistence < 1.0) {
                return Err(Error::StationarityViolation { asset: i, persistence });
            }
        }
        let alpha0 = DVector::from_fn(p, |i, _| m[(i, i)] * (1.0 - alpha1[i] - beta1[i]));
        let corr = DMatrix::from_fn(p, p, |i, j| m[(i, j)] / (m[(i, i)] * m[(j, j)]).sqrt());
        let corr_root = nalgebra::Cholesky::new(corr.clone())
            .ok_or(Error::CholeskyFailure)?
            .l();
        Ok(GarchParams {
            alpha0,
            alpha1,
            beta1,
            corr_root,
            corr,
        })
    }
}

/// Everything needed to simulate replications of one scenario.
#[derive(Debug, Clone)]
pub struct Population {
    pub mu: MeanVector,
    pub sigma: CovarianceMatrix,
    pub(crate) root: Root,
    pub garch: Option<GarchParams>,
}

impl Population {
    pub fn build(spec: &ScenarioSpec) -> Result<Self> {
        let (mu, sigma) = build_population(spec)?;
        let garch = match spec.garch_spec() {
            Some(g) => Some(GarchParams::draw(&g, &sigma, spec.seed)?),
            None => None,
        };
        Ok(Population {
            root: Root::of(&sigma)?,
            mu,
            sigma,
            garch,
        })
    }

    /// Population with given moments; GARCH coefficients are drawn from
    /// `garch` and `seed` when supplied.
    pub fn from_moments(mu: MeanVector, sigma: CovarianceMatrix, garch: Option<(GarchSpec, u64)>) -> Result<Self> {
        if mu.len() != sigma.dim() {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {}, covariance is {}x{}",
                mu.len(),
                sigma.dim(),
                sigma.dim()
            )));
        }
        let garch = match garch {
            Some((g, seed)) => Some(GarchParams::draw(&g, &sigma, seed)?),
            None => None,
        };
        Ok(Population {
            root: Root::of(&sigma)?,
            mu,
            sigma,
            garch,
        })
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spectrum_p10() {
        let s = SpectrumSpec::default();
        assert_eq!(s.multiplicities(10).unwrap(), vec![2, 4, 4]);
        let eig = s.eigenvalues(10).unwrap();
        assert_eq!(eig, vec![0.5, 0.5, 1.0, 1.0, 1.0, 1.0, 5.0, 5.0, 5.0, 5.0]);
    }

    #[test]
    fn rounding_rule_p7() {
        let m = SpectrumSpec::default().multiplicities(7).unwrap();
        assert_eq!(m, vec![1, 3, 3]);
        assert_eq!(m.iter().sum::<usize>(), 7);
    }

    #[test]
    fn bad_spectra() {
        let bad = SpectrumSpec { proportions: vec![(0.5, 1.0), (0.4, 2.0)] };
        assert!(matches!(bad.validate(), Err(Error::InvalidSpectrum(_))));
        let neg = SpectrumSpec { proportions: vec![(1.0, -1.0)] };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn population_is_deterministic() {
        let spec = ScenarioSpec::new(ScenarioKind::Normal, 20, 40, 99);
        let a = build_population(&spec).unwrap();
        let b = build_population(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.0.as_vector().iter().all(|&m| (-0.2..0.2).contains(&m)));
        let other = build_population(&ScenarioSpec { seed: 100, ..spec }).unwrap();
        assert_ne!(a.0, other.0);
    }

    #[test]
    fn garch_intercept() {
        let sigma = CovarianceMatrix::diagonal(&[5.0]).unwrap();
        let g = GarchParams::from_coefficients(&sigma, DVector::from_element(1, 0.05), DVector::from_element(1, 0.85)).unwrap();
        assert!((g.alpha0[0] - 0.5).abs() < 1e-14);
        let err = GarchParams::from_coefficients(&sigma, DVector::from_element(1, 0.2), DVector::from_element(1, 0.8));
        assert!(matches!(err, Err(Error::StationarityViolation { asset: 0, .. })));
    }

    #[test]
    fn scenario_names_round_trip() {
        for k in [ScenarioKind::Normal, ScenarioKind::StudentT3, ScenarioKind::CccGarch] {
            assert_eq!(k.name().parse::<ScenarioKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
    }
}
