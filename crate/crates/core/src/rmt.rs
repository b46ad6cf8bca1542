//! Random-matrix limits behind the estimators.
//!
//! Deterministic equivalents of resolvent quadratic forms for
//! `S~ = XX'/n`, the chi-square and noncentral-F central limit laws, and the
//! exact Gaussian finite-sample laws of the sample frontier. Everything is
//! exposed as computable functions plus seeded Monte Carlo checks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontier::{CovarianceMatrix, FrontierParams};
use crate::linalg::SpdFactor;
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StieltjesPoint {
    pub z: Complex64,
    pub c: f64,
}

impl StieltjesPoint {
    pub fn new(z: Complex64, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidInput(format!("concentration c = {c} must be positive")));
        }
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::NonFinite("z"));
        }
        Ok(StieltjesPoint { z, c })
    }
}

/// Growth exponent of the frontier quadratic forms, e.g. `1'Sigma^-1 1 ~ p^q`.
///
/// The bounding constants of that growth condition have no finite-sample
/// counterpart and are not represented.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRegime {
    pub q: f64,
}

impl ScalingRegime {
    pub fn new(q: f64) -> Result<Self> {
        if !(q >= 0.0) {
            return Err(Error::InvalidInput(format!("q = {q} must be nonnegative")));
        }
        Ok(ScalingRegime { q })
    }
}

fn point_label(z: Complex64) -> String {
    format!("{}{:+}i", z.re, z.im)
}

/// Both roots of `x^2 - (1 - c + z) x + z = 0`, computed without cancellation.
fn roots(z: Complex64, c: f64) -> Result<(Complex64, Complex64)> {
    let t = Complex64::new(1.0 - c, 0.0) + z;
    let disc = t * t - 4.0 * z;
    if disc == Complex64::new(0.0, 0.0) {
        return Err(Error::BranchAmbiguity(point_label(z)));
    }
    let sq = disc.sqrt();
    let big = if (t + sq).norm() >= (t - sq).norm() { (t + sq) / 2.0 } else { (t - sq) / 2.0 };
    Ok((big, z / big))
}

/// Root of the fixed-point equation `(1 - x)/x = c/(x - z)` with the larger
/// imaginary part (nonnegative in the upper half-plane). At `z = 0` the
/// analytic limit `1 - c` is returned for `c < 1`.
pub fn x_of_z(pt: StieltjesPoint) -> Result<Complex64> {
    let StieltjesPoint { z, c } = pt;
    if z == Complex64::new(0.0, 0.0) {
        return if c < 1.0 {
            Ok(Complex64::new(1.0 - c, 0.0))
        } else {
            Err(Error::BranchAmbiguity(point_label(z)))
        };
    }
    if z.im == 0.0 {
        return Err(Error::BranchAmbiguity(point_label(z)));
    }
    if z.im < 0.0 {
        return x_of_z(StieltjesPoint { z: z.conj(), c }).map(|x| x.conj());
    }
    let (x1, x2) = roots(z, c)?;
    if x1.im == x2.im {
        return Err(Error::BranchAmbiguity(point_label(z)));
    }
    Ok(if x1.im > x2.im { x1 } else { x2 })
}

/// `|(1 - x)/x - c/(x - z)|`.
pub fn fixed_point_residual(pt: StieltjesPoint, x: Complex64) -> f64 {
    ((1.0 - x) / x - pt.c / (x - pt.z)).norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transforms {
    pub m: Complex64,
    /// `-(1 - c)/z + c m`; `None` at `z = 0`, where it has a pole.
    pub m_under: Option<Complex64>,
}

/// Stieltjes transform of the Marchenko-Pastur law and its companion.
///
/// `m = (x - z)^-1` must use the root whose imaginary part is below `Im z`;
/// since the two roots' imaginary parts sum to `Im z`, that is the companion
/// `1 - c + z - x` of the root returned by [`x_of_z`]. At `z = 0` the roots
/// coincide with the analytic limit and `m(0) = 1/(1 - c)`.
pub fn m_of_z(pt: StieltjesPoint) -> Result<Transforms> {
    let StieltjesPoint { z, c } = pt;
    if z == Complex64::new(0.0, 0.0) {
        if c >= 1.0 {
            return Err(Error::BranchAmbiguity(point_label(z)));
        }
        return Ok(Transforms {
            m: Complex64::new(1.0 / (1.0 - c), 0.0),
            m_under: None,
        });
    }
    let x = x_of_z(pt)?;
    let companion = Complex64::new(1.0 - c, 0.0) + z - x;
    let d = companion - z;
    if d.norm() == 0.0 {
        return Err(Error::PoleAtZ(point_label(z)));
    }
    let m = 1.0 / d;
    Ok(Transforms {
        m,
        m_under: Some(-(1.0 - c) / z + c * m),
    })
}

/// `m(0+) = 1/(1 - c)`.
pub fn m_at_zero(c: f64) -> Result<f64> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::RatioOutOfRange(c));
    }
    Ok(1.0 / (1.0 - c))
}

/// `(1/p) tr (S~ - z I)^-1` for a realized `S~ = XX'/n`.
pub fn empirical_stieltjes(x: &DMatrix<f64>, z: Complex64) -> Complex64 {
    let n = x.ncols() as f64;
    let s = x * x.transpose() / n;
    let eig = SymmetricEigen::new(s);
    let p = eig.eigenvalues.len() as f64;
    eig.eigenvalues
        .iter()
        .map(|&l| 1.0 / (Complex64::new(l, 0.0) - z))
        .sum::<Complex64>()
        / p
}

/// Standard normal `p x n` matrix.
pub fn standard_normal_matrix(p: usize, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    // Column-major fill keeps the draw order independent of matrix layout changes.
    let data: Vec<f64> = (0..p * n).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_vec(p, n, data)
}

fn unit_vector(p: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let v = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = v.norm();
    v / norm
}

/// One named Monte Carlo diagnostic, serialized as a JSON record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub check: String,
    pub p: usize,
    pub n: usize,
    pub c: f64,
    pub seed: u64,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

fn dims_for(c: f64, p: usize) -> Result<usize> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::RatioOutOfRange(c));
    }
    let n = (p as f64 / c).round() as usize;
    if p >= n {
        return Err(Error::SingularMatrix { p, n });
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Diagnostics {
    pub p: usize,
    pub n: usize,
    pub c: f64,
    pub seed: u64,
    /// `|xi' S~^-1 theta - xi'theta / (1 - c)|` for independent unit vectors.
    pub xi_theta: f64,
    /// `|theta' S~^-1 theta - 1/(1 - c)|`.
    pub theta_theta: f64,
    /// `|xbar' S~^-1 xbar - c|`.
    pub xbar: f64,
    /// `|n^{-1/2} xbar' S~^-1 theta|`.
    pub cross: f64,
}

impl Lemma2Diagnostics {
    pub fn records(&self, threshold: f64) -> Vec<Diagnostic> {
        [
            ("lemma2.xi_theta", self.xi_theta),
            ("lemma2.theta_theta", self.theta_theta),
            ("lemma2.xbar", self.xbar),
            ("lemma2.cross", self.cross),
        ]
        .into_iter()
        .map(|(check, value)| Diagnostic {
            check: check.into(),
            p: self.p,
            n: self.n,
            c: self.c,
            seed: self.seed,
            value,
            threshold,
            pass: value < threshold,
        })
        .collect()
    }
}

/// Raw quadratic forms of `S~^-1` used by the Lemma-2 check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Lemma2Forms {
    pub xi_theta: f64,
    pub xi_dot_theta: f64,
    pub theta_theta: f64,
    pub xbar: f64,
    pub xbar_theta: f64,
}

pub(crate) fn lemma2_forms(x: &DMatrix<f64>, theta: &DVector<f64>, xi: &DVector<f64>) -> Result<Lemma2Forms> {
    let (p, n) = x.shape();
    let s = x * x.transpose() / n as f64;
    let f = SpdFactor::new(s).ok_or(Error::SingularMatrix { p, n })?;
    let xbar = x.column_mean();
    let (wt, wx, wb) = (f.whiten(theta), f.whiten(xi), f.whiten(&xbar));
    Ok(Lemma2Forms {
        xi_theta: wx.dot(&wt),
        xi_dot_theta: xi.dot(theta),
        theta_theta: wt.dot(&wt),
        xbar: wb.dot(&wb),
        xbar_theta: wb.dot(&wt),
    })
}

pub fn lemma2_quadform_check(c: f64, p: usize, seed: u64) -> Result<Lemma2Diagnostics> {
    let n = dims_for(c, p)?;
    let mut rng = rng::stream(seed, Domain::Theory, 2);
    let x = standard_normal_matrix(p, n, &mut rng);
    let theta = unit_vector(p, &mut rng);
    let xi = unit_vector(p, &mut rng);
    let f = lemma2_forms(&x, &theta, &xi)?;
    let cn = p as f64 / n as f64;
    Ok(Lemma2Diagnostics {
        p,
        n,
        c: cn,
        seed,
        xi_theta: (f.xi_theta - f.xi_dot_theta / (1.0 - cn)).abs(),
        theta_theta: (f.theta_theta - 1.0 / (1.0 - cn)).abs(),
        xbar: (f.xbar - cn).abs(),
        cross: (f.xbar_theta / (n as f64).sqrt()).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Diagnostics {
    pub p: usize,
    pub n: usize,
    pub c: f64,
    pub seed: u64,
    /// `p^-1 |1'S^-1 1 - 1'Sigma^-1 1 / (1 - c)|`.
    pub quad_form: f64,
    /// `|xbar' Sigma^{1/2} S^-1 Sigma^{1/2} xbar - c/(1 - c)|`.
    pub xbar: f64,
    /// `p^-1 |xbar' Sigma^{1/2} S^-1 1|`.
    pub cross: f64,
}

impl Lemma3Diagnostics {
    pub fn records(&self, threshold: f64) -> Vec<Diagnostic> {
        [
            ("lemma3.quad_form", self.quad_form),
            ("lemma3.xbar", self.xbar),
            ("lemma3.cross", self.cross),
        ]
        .into_iter()
        .map(|(check, value)| Diagnostic {
            check: check.into(),
            p: self.p,
            n: self.n,
            c: self.c,
            seed: self.seed,
            value,
            threshold,
            pass: value < threshold,
        })
        .collect()
    }
}

/// Symmetric square root through the eigendecomposition.
pub(crate) fn sym_sqrt(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(sigma.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

pub(crate) fn lemma3_forms(x: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<(f64, f64, f64, f64)> {
    let (p, n) = x.shape();
    let root = sym_sqrt(sigma);
    let y = &root * x;
    let ybar = y.column_mean();
    let mut centered = y;
    for mut col in centered.column_iter_mut() {
        col -= &ybar;
    }
    let s = &centered * centered.transpose() / n as f64;
    let fs = SpdFactor::new(s).ok_or(Error::SingularMatrix { p, n })?;
    let fsig = SpdFactor::new(sigma.clone()).ok_or(Error::CholeskyFailure)?;
    let ones = DVector::from_element(p, 1.0);
    let (w1, wy) = (fs.whiten(&ones), fs.whiten(&ybar));
    let pop = fsig.whiten(&ones).norm_squared();
    // Sigma^{1/2} xbar is the sample mean of Y since Y has zero mean.
    Ok((w1.norm_squared(), pop, wy.norm_squared(), wy.dot(&w1)))
}

pub fn lemma3_quadform_check(c: f64, p: usize, sigma: &CovarianceMatrix, seed: u64) -> Result<Lemma3Diagnostics> {
    let n = dims_for(c, p)?;
    if sigma.dim() != p {
        return Err(Error::DimensionMismatch(format!("sigma is {0}x{0}, p = {p}", sigma.dim())));
    }
    sigma.factor()?;
    let mut rng = rng::stream(seed, Domain::Theory, 3);
    let x = standard_normal_matrix(p, n, &mut rng);
    let (one_s_one, one_sigma_one, xbar, cross) = lemma3_forms(&x, sigma.as_matrix())?;
    let cn = p as f64 / n as f64;
    let pf = p as f64;
    Ok(Lemma3Diagnostics {
        p,
        n,
        c: cn,
        seed,
        quad_form: (one_s_one - one_sigma_one / (1.0 - cn)).abs() / pf,
        xbar: (xbar - cn / (1.0 - cn)).abs(),
        cross: cross.abs() / pf,
    })
}

/// Central limit law specifications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LimitLawSpec {
    /// `sqrt(n) (Z/(n-p) - 1)` with `Z ~ chi2_{n-p}`.
    ChiSqClt { p: usize, n: usize },
    /// `sqrt(n) ((n-p)/p F - 1 - (n/p) lambda)` with `F ~ F_{p, n-p, n lambda}`.
    NoncentralFClt { p: usize, n: usize, lambda: f64 },
}

impl LimitLawSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LimitLawSpec::ChiSqClt { p, n } | LimitLawSpec::NoncentralFClt { p, n, .. } if n <= p => {
                Err(Error::SingularMatrix { p, n })
            }
            LimitLawSpec::NoncentralFClt { lambda, .. } if !(lambda >= 0.0) => {
                Err(Error::InvalidInput(format!("lambda = {lambda} must be nonnegative")))
            }
            _ => Ok(()),
        }
    }

    /// `(centering or mean, variance)` of the statistic.
    pub fn moments(&self) -> (f64, f64) {
        match *self {
            LimitLawSpec::ChiSqClt { p, n } => chisq_clt_moments(p, n),
            LimitLawSpec::NoncentralFClt { p, n, lambda } => noncentral_f_clt_params(p, n, lambda),
        }
    }

    /// `reps` independent draws of the statistic.
    pub fn sample(&self, reps: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        let mut rng = rng::stream(seed, Domain::Theory, 1);
        Ok(match *self {
            LimitLawSpec::ChiSqClt { p, n } => {
                let dist = ChiSquared::new((n - p) as f64).expect("positive df");
                let (nf, df) = (n as f64, (n - p) as f64);
                (0..reps).map(|_| nf.sqrt() * (dist.sample(&mut rng) / df - 1.0)).collect()
            }
            LimitLawSpec::NoncentralFClt { p, n, lambda } => {
                let f2 = ChiSquared::new((n - p) as f64).expect("positive df");
                let (nf, pf, df) = (n as f64, p as f64, (n - p) as f64);
                (0..reps)
                    .map(|_| {
                        let a = noncentral_chisq(&mut rng, pf, nf * lambda);
                        let b = f2.sample(&mut rng);
                        nf.sqrt() * ((a / pf) / (b / df) - 1.0 - nf / pf * lambda)
                    })
                    .collect()
            }
        })
    }
}

/// Exact mean and variance of `sqrt(n)(Z/(n-p) - 1)`: `0` and `2n/(n-p)`.
pub fn chisq_clt_moments(p: usize, n: usize) -> (f64, f64) {
    (0.0, 2.0 * n as f64 / (n - p) as f64)
}

/// Centering `1 + (n/p) lambda` of `(n-p)/p F` and the limiting variance
/// `(2/c)(1 + 2 lambda/c) + (2/(1-c))(1 + lambda/c)^2` at `c = p/n`.
pub fn noncentral_f_clt_params(p: usize, n: usize, lambda: f64) -> (f64, f64) {
    let c = p as f64 / n as f64;
    let centering = 1.0 + n as f64 / p as f64 * lambda;
    let r = lambda / c;
    (centering, 2.0 / c * (1.0 + 2.0 * r) + 2.0 / (1.0 - c) * (1.0 + r) * (1.0 + r))
}

/// Noncentral chi-square draw as a Poisson mixture of central chi-squares.
pub fn noncentral_chisq<R: Rng + ?Sized>(rng: &mut R, df: f64, ncp: f64) -> f64 {
    let k = if ncp > 0.0 {
        Poisson::new(ncp / 2.0).expect("positive rate").sample(rng)
    } else {
        0.0
    };
    ChiSquared::new(df + 2.0 * k).expect("positive df").sample(rng)
}

/// Mean of the noncentral F distribution, `d2 (d1 + lambda) / (d1 (d2 - 2))`.
pub fn noncentral_f_mean(d1: f64, d2: f64, lambda: f64) -> f64 {
    d2 * (d1 + lambda) / (d1 * (d2 - 2.0))
}

/// Exact Gaussian laws of the sample frontier estimators computed with the
/// `n - 1` covariance divisor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma5Laws {
    pub p: usize,
    pub n: usize,
    pub truth: FrontierParams,
    /// `(n-1) V_hat / V ~ chi2` with this many degrees of freedom.
    pub chisq_df: usize,
    /// `scale * s_hat ~ F(df1, df2, noncentrality)`.
    pub f_df1: usize,
    pub f_df2: usize,
    pub f_noncentrality: f64,
    pub f_scale: f64,
}

impl Lemma5Laws {
    /// Statistic that follows the chi-square law.
    pub fn v_statistic(&self, v_hat: f64) -> f64 {
        (self.n - 1) as f64 * v_hat / self.truth.v_gmv
    }

    /// Statistic that follows the noncentral F law.
    pub fn s_statistic(&self, s_hat: f64) -> f64 {
        self.f_scale * s_hat
    }

    pub fn f_mean(&self) -> f64 {
        noncentral_f_mean(self.f_df1 as f64, self.f_df2 as f64, self.f_noncentrality)
    }

    /// Variance of `R_hat` given `s_hat = y`: `(1 + n y/(n-1)) V / n`.
    pub fn conditional_r_variance(&self, y: f64) -> f64 {
        let n = self.n as f64;
        (1.0 + n / (n - 1.0) * y) * self.truth.v_gmv / n
    }
}

pub fn lemma5_exact_laws(fp: FrontierParams, p: usize, n: usize) -> Result<Lemma5Laws> {
    if n <= p {
        return Err(Error::SingularMatrix { p, n });
    }
    if p < 2 {
        return Err(Error::InvalidInput("the slope law needs p >= 2".into()));
    }
    let (pf, nf) = (p as f64, n as f64);
    Ok(Lemma5Laws {
        p,
        n,
        truth: fp,
        chisq_df: n - p,
        f_df1: p - 1,
        f_df2: n - p + 1,
        f_noncentrality: nf * fp.slope,
        f_scale: nf * (nf - pf + 1.0) / ((nf - 1.0) * (pf - 1.0)),
    })
}
