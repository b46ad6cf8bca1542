use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, StudentT};

use super::{GarchParams, Population, ScenarioKind, ScenarioSpec};
use crate::error::{Error, Result};
use crate::estimators::ReturnsMatrix;
use crate::rmt::standard_normal_matrix;

/// Steps discarded before the first recorded GARCH observation.
pub const GARCH_BURN_IN: usize = 500;

pub fn generate(spec: &ScenarioSpec, pop: &Population, rng: &mut ChaCha8Rng) -> Result<ReturnsMatrix> {
    match spec.kind {
        ScenarioKind::Normal => generate_normal(pop, spec.n, rng),
        ScenarioKind::StudentT3 => generate_t3(pop, spec.n, rng),
        ScenarioKind::CccGarch => generate_ccc_garch(pop, spec.n, rng),
    }
}

/// Columns i.i.d. `N(mu, Sigma)`.
pub fn generate_normal(pop: &Population, n: usize, rng: &mut ChaCha8Rng) -> Result<ReturnsMatrix> {
    let x = standard_normal_matrix(pop.p(), n, rng);
    ReturnsMatrix::new(pop.root.color(x, pop.mu.as_vector()))
}

/// Entries of `X` are Student t with 3 degrees of freedom times `sqrt(1/3)`,
/// so each entry has unit variance while fourth moments do not exist.
pub fn generate_t3(pop: &Population, n: usize, rng: &mut ChaCha8Rng) -> Result<ReturnsMatrix> {
    let t3 = StudentT::new(3.0).expect("valid degrees of freedom");
    let scale = (1.0f64 / 3.0).sqrt();
    let data: Vec<f64> = (0..pop.p() * n).map(|_| scale * rng.sample(t3)).collect();
    let x = DMatrix::from_vec(pop.p(), n, data);
    ReturnsMatrix::new(pop.root.color(x, pop.mu.as_vector()))
}

/// Conditional variances of a constant-correlation GARCH(1,1) system.
#[derive(Debug, Clone, PartialEq)]
pub struct GarchState {
    pub h: DVector<f64>,
    pub alpha0: DVector<f64>,
    pub alpha1: DVector<f64>,
    pub beta1: DVector<f64>,
    pub corr: DMatrix<f64>,
    corr_root: DMatrix<f64>,
}

impl GarchState {
    /// Start at the unconditional variances `alpha0 / (1 - alpha1 - beta1)`.
    pub fn new(params: &GarchParams) -> Result<Self> {
        let p = params.alpha0.len();
        let mut h = DVector::zeros(p);
        for i in 0..p {
            let persistence = params.alpha1[i] + params.beta1[i];
            if persistence >= 1.0 {
                return Err(Error::StationarityViolation { asset: i, persistence });
            }
            h[i] = params.alpha0[i] / (1.0 - persistence);
        }
        Ok(GarchState {
            h,
            alpha0: params.alpha0.clone(),
            alpha1: params.alpha1.clone(),
            beta1: params.beta1.clone(),
            corr: params.corr.clone(),
            corr_root: params.corr_root.clone(),
        })
    }

    /// Advance one period: returns the centered shock `diag(sqrt(h)) eps`
    /// with `eps ~ N(0, corr)` and updates `h`.
    pub fn step(&mut self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let p = self.h.len();
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let eps = &self.corr_root * z;
        let shock = DVector::from_fn(p, |i, _| self.h[i].sqrt() * eps[i]);
        for i in 0..p {
            self.h[i] = self.alpha0[i] + self.alpha1[i] * shock[i] * shock[i] + self.beta1[i] * self.h[i];
        }
        shock
    }
}

pub fn generate_ccc_garch(pop: &Population, n: usize, rng: &mut ChaCha8Rng) -> Result<ReturnsMatrix> {
    let params = pop
        .garch
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("population has no GARCH coefficients".into()))?;
    let mut state = GarchState::new(params)?;
    for _ in 0..GARCH_BURN_IN {
        state.step(rng);
    }
    let mu = pop.mu.as_vector();
    let mut y = DMatrix::zeros(pop.p(), n);
    for t in 0..n {
        let shock = state.step(rng);
        y.set_column(t, &(shock + mu));
    }
    ReturnsMatrix::new(y)
}
