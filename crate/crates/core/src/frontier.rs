//! Population frontier mathematics.
//!
//! The efficient frontier is the upper branch of the parabola
//! `(R - r_gmv)^2 = slope * (V - v_gmv)` in mean-variance space. The same
//! curve is described by the Merton constants `a = mu' S^-1 mu`,
//! `b = 1' S^-1 mu` and `c = 1' S^-1 1` via `V = (a - 2bR + cR^2) / (ac - b^2)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, QuadForms, SpdFactor};

/// Rounding slack allowed below zero before a slope is treated as invalid.
pub const SLOPE_CLAMP_TOL: f64 = 1e-12;

/// Expected returns per holding period, one entry per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanVector(DVector<f64>);

impl MeanVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DimensionMismatch("mean vector is empty".into()));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("mean vector"));
        }
        Ok(MeanVector(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

/// Symmetric covariance matrix.
///
/// Construction symmetrizes small rounding asymmetry and rejects anything
/// larger; positive definiteness is checked when the matrix is factored.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix(DMatrix<f64>);

impl CovarianceMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::DimensionMismatch("covariance matrix is empty".into()));
        }
        linalg::symmetrize(values).map(CovarianceMatrix)
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn is_diagonal(&self) -> bool {
        let p = self.dim();
        (0..p).all(|j| (0..p).all(|i| i == j || self.0[(i, j)] == 0.0))
    }

    pub fn factor(&self) -> Result<SpdFactor> {
        SpdFactor::new(self.0.clone()).ok_or(Error::CholeskyFailure)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MertonConstants {
    pub a: f64,
    pub b: f64,
    pub c_m: f64,
}

impl From<QuadForms> for MertonConstants {
    fn from(q: QuadForms) -> Self {
        MertonConstants {
            a: q.a,
            b: q.b,
            c_m: q.c,
        }
    }
}

/// Vertex and curvature of the frontier parabola.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierParams {
    pub r_gmv: f64,
    pub v_gmv: f64,
    pub slope: f64,
}

impl FrontierParams {
    /// Expected return on the efficient branch at variance `v`, if `v` is reachable.
    pub fn upper_return_at(&self, v: f64) -> Option<f64> {
        if !(self.v_gmv > 0.0) || self.slope < 0.0 || v < self.v_gmv {
            return None;
        }
        Some(self.r_gmv + (self.slope * (v - self.v_gmv)).sqrt())
    }
}

/// Concentration ratio `p/n`, restricted to the open unit interval.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ConcentrationRatio(f64);

impl ConcentrationRatio {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(ConcentrationRatio(value))
        } else {
            Err(Error::RatioOutOfRange(value))
        }
    }

    pub fn from_dims(p: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::RatioOutOfRange(f64::INFINITY));
        }
        Self::new(p as f64 / n as f64)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_dims(mu: &MeanVector, sigma: &CovarianceMatrix) -> Result<()> {
    if mu.len() != sigma.dim() {
        return Err(Error::DimensionMismatch(format!(
            "mean has length {}, covariance is {}x{}",
            mu.len(),
            sigma.dim(),
            sigma.dim()
        )));
    }
    Ok(())
}

/// `(a, b, c_m)` from one Cholesky factorization of `sigma`.
pub fn merton_constants(mu: &MeanVector, sigma: &CovarianceMatrix) -> Result<MertonConstants> {
    check_dims(mu, sigma)?;
    let factor = sigma.factor()?;
    Ok(factor.inverse_forms(mu.as_vector()).into())
}

pub fn frontier_params(mu: &MeanVector, sigma: &CovarianceMatrix) -> Result<FrontierParams> {
    from_merton(merton_constants(mu, sigma)?)
}

/// Slope `a - b^2/c`, clamped to zero when it is negative only by rounding.
pub(crate) fn clamped_slope(mc: &MertonConstants) -> Result<f64> {
    let slope = mc.a - mc.b * mc.b / mc.c_m;
    if slope >= 0.0 {
        Ok(slope)
    } else if slope > -SLOPE_CLAMP_TOL * mc.a.abs() {
        Ok(0.0)
    } else {
        Err(Error::InvalidConstants(format!(
            "a*c - b^2 < 0 (slope {slope:.3e}) violates Cauchy-Schwarz"
        )))
    }
}

pub fn from_merton(mc: MertonConstants) -> Result<FrontierParams> {
    if !(mc.c_m > 0.0) || !mc.c_m.is_finite() {
        return Err(Error::InvalidConstants(format!("c_m = {} must be positive", mc.c_m)));
    }
    if !mc.a.is_finite() || !mc.b.is_finite() {
        return Err(Error::NonFinite("Merton constants"));
    }
    Ok(FrontierParams {
        r_gmv: mc.b / mc.c_m,
        v_gmv: 1.0 / mc.c_m,
        slope: clamped_slope(&mc)?,
    })
}

pub fn to_merton(fp: FrontierParams) -> Result<MertonConstants> {
    if !(fp.v_gmv > 0.0) || !fp.v_gmv.is_finite() {
        return Err(Error::InvalidParams(format!("v_gmv = {} must be positive", fp.v_gmv)));
    }
    Ok(MertonConstants {
        a: fp.slope + fp.r_gmv * fp.r_gmv / fp.v_gmv,
        b: fp.r_gmv / fp.v_gmv,
        c_m: 1.0 / fp.v_gmv,
    })
}

/// Variance of the frontier portfolio with expected return `r`.
pub fn frontier_variance_at(fp: FrontierParams, r: f64) -> Result<f64> {
    if fp.slope > 0.0 {
        let d = r - fp.r_gmv;
        Ok(fp.v_gmv + d * d / fp.slope)
    } else if r == fp.r_gmv {
        Ok(fp.v_gmv)
    } else {
        Err(Error::DegenerateSlope)
    }
}

/// Variance from the Merton form of the frontier.
pub fn merton_variance_at(mc: MertonConstants, r: f64) -> f64 {
    (mc.a - 2.0 * mc.b * r + mc.c_m * r * r) / (mc.a * mc.c_m - mc.b * mc.b)
}

/// `n_points` pairs `(V, R_upper)` on an even grid over `[v_gmv, v_max]`.
pub fn frontier_curve(fp: FrontierParams, v_max: f64, n_points: usize) -> Result<Vec<(f64, f64)>> {
    if n_points < 2 {
        return Err(Error::InvalidRange(format!("n_points = {n_points} must be at least 2")));
    }
    if !(v_max > fp.v_gmv) || !v_max.is_finite() {
        return Err(Error::InvalidRange(format!(
            "v_max = {v_max} must exceed v_gmv = {}",
            fp.v_gmv
        )));
    }
    if fp.slope < 0.0 || !(fp.v_gmv > 0.0) {
        return Err(Error::InvalidParams(
            "curve needs v_gmv > 0 and slope >= 0".into(),
        ));
    }
    let step = (v_max - fp.v_gmv) / (n_points - 1) as f64;
    Ok((0..n_points)
        .map(|i| {
            let v = if i + 1 == n_points {
                v_max
            } else {
                fp.v_gmv + step * i as f64
            };
            (v, fp.r_gmv + (fp.slope * (v - fp.v_gmv)).sqrt())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn two_by_two() -> (MeanVector, CovarianceMatrix) {
        (
            MeanVector::from_slice(&[0.0, 0.3]).unwrap(),
            CovarianceMatrix::diagonal(&[1.0, 2.0]).unwrap(),
        )
    }

    // Oracle: closed-form 2x2 inverse, independent of the Cholesky path.
    fn inverse_2x2(m: &DMatrix<f64>) -> DMatrix<f64> {
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        dmatrix![m[(1, 1)] / det, -m[(0, 1)] / det; -m[(1, 0)] / det, m[(0, 0)] / det]
    }

    #[test]
    fn merton_identity_zero_mean() {
        let mc = merton_constants(
            &MeanVector::from_slice(&[0.0; 3]).unwrap(),
            &CovarianceMatrix::new(DMatrix::identity(3, 3)).unwrap(),
        )
        .unwrap();
        assert_eq!((mc.a, mc.b, mc.c_m), (0.0, 0.0, 3.0));
    }

    #[test]
    fn merton_two_by_two_against_explicit_inverse() {
        let (mu, sigma) = two_by_two();
        let inv = inverse_2x2(sigma.as_matrix());
        let ones = DVector::from_element(2, 1.0);
        let m = mu.as_vector();
        let expected = (m.dot(&(&inv * m)), ones.dot(&(&inv * m)), ones.dot(&(&inv * &ones)));
        assert_relative_eq!(expected.0, 0.045, max_relative = 1e-14);
        assert_relative_eq!(expected.1, 0.15, max_relative = 1e-14);
        assert_relative_eq!(expected.2, 1.5, max_relative = 1e-14);

        let mc = merton_constants(&mu, &sigma).unwrap();
        assert_relative_eq!(mc.a, expected.0, max_relative = 1e-12);
        assert_relative_eq!(mc.b, expected.1, max_relative = 1e-12);
        assert_relative_eq!(mc.c_m, expected.2, max_relative = 1e-12);
    }

    #[test]
    fn merton_constant_mean() {
        let mc = merton_constants(
            &MeanVector::from_slice(&[0.1; 4]).unwrap(),
            &CovarianceMatrix::new(DMatrix::identity(4, 4)).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(mc.a, 0.04, max_relative = 1e-12);
        assert_relative_eq!(mc.b, 0.4, max_relative = 1e-12);
        assert_relative_eq!(mc.c_m, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn params_two_by_two() {
        let (mu, sigma) = two_by_two();
        let fp = frontier_params(&mu, &sigma).unwrap();
        assert_relative_eq!(fp.r_gmv, 0.1, max_relative = 1e-12);
        assert_relative_eq!(fp.v_gmv, 2.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(fp.slope, 0.03, max_relative = 1e-10);
    }

    #[test]
    fn constant_mean_has_zero_slope() {
        for m in [-0.3, 0.0, 0.7] {
            let fp = frontier_params(
                &MeanVector::from_slice(&[m; 5]).unwrap(),
                &CovarianceMatrix::new(DMatrix::identity(5, 5)).unwrap(),
            )
            .unwrap();
            assert_eq!(fp.slope, 0.0);
        }
        let fp = frontier_params(
            &MeanVector::from_slice(&[0.0; 4]).unwrap(),
            &CovarianceMatrix::new(DMatrix::identity(4, 4)).unwrap(),
        )
        .unwrap();
        assert_eq!((fp.r_gmv, fp.v_gmv, fp.slope), (0.0, 0.25, 0.0));
    }

    #[test]
    fn errors_on_bad_inputs() {
        let mu = MeanVector::from_slice(&[0.0, 0.1, 0.2]).unwrap();
        let (_, sigma) = two_by_two();
        assert!(matches!(
            merton_constants(&mu, &sigma),
            Err(Error::DimensionMismatch(_))
        ));
        let indefinite = CovarianceMatrix::new(dmatrix![1.0, 2.0; 2.0, 1.0]).unwrap();
        let mu2 = MeanVector::from_slice(&[0.0, 0.1]).unwrap();
        assert_eq!(merton_constants(&mu2, &indefinite), Err(Error::CholeskyFailure));
        assert!(from_merton(MertonConstants { a: 1.0, b: 0.0, c_m: 0.0 }).is_err());
        assert!(from_merton(MertonConstants { a: 0.1, b: 1.0, c_m: 1.0 }).is_err());
        assert!(to_merton(FrontierParams { r_gmv: 0.0, v_gmv: 0.0, slope: 1.0 }).is_err());
    }

    #[test]
    fn from_merton_examples() {
        let fp = from_merton(MertonConstants { a: 0.045, b: 0.15, c_m: 1.5 }).unwrap();
        assert_relative_eq!(fp.r_gmv, 0.1, max_relative = 1e-12);
        assert_relative_eq!(fp.v_gmv, 2.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(fp.slope, 0.03, max_relative = 1e-10);

        let fp = from_merton(MertonConstants { a: 0.7, b: 0.0, c_m: 2.0 }).unwrap();
        assert_eq!((fp.r_gmv, fp.slope), (0.0, 0.7));

        // a * c = b^2 exactly
        let fp = from_merton(MertonConstants { a: 0.25, b: 0.5, c_m: 1.0 }).unwrap();
        assert_eq!(fp.slope, 0.0);
    }

    #[test]
    fn to_merton_examples() {
        let mc = to_merton(FrontierParams { r_gmv: 0.1, v_gmv: 2.0 / 3.0, slope: 0.03 }).unwrap();
        assert_relative_eq!(mc.a, 0.045, max_relative = 1e-12);
        assert_relative_eq!(mc.b, 0.15, max_relative = 1e-12);
        assert_relative_eq!(mc.c_m, 1.5, max_relative = 1e-12);
        let mc = to_merton(FrontierParams { r_gmv: 0.0, v_gmv: 1.0, slope: 0.0 }).unwrap();
        assert_eq!((mc.a, mc.b, mc.c_m), (0.0, 0.0, 1.0));
    }

    #[test]
    fn variance_at_examples() {
        let fp = FrontierParams { r_gmv: 0.1, v_gmv: 2.0 / 3.0, slope: 0.03 };
        assert_eq!(frontier_variance_at(fp, 0.1).unwrap(), 2.0 / 3.0);
        assert_relative_eq!(frontier_variance_at(fp, 0.4).unwrap(), 11.0 / 3.0, max_relative = 1e-12);

        let mc = MertonConstants { a: 0.045, b: 0.15, c_m: 1.5 };
        assert_relative_eq!(merton_variance_at(mc, mc.b / mc.c_m), 1.0 / mc.c_m, max_relative = 1e-12);

        let flat = FrontierParams { r_gmv: 0.2, v_gmv: 1.0, slope: 0.0 };
        assert_eq!(frontier_variance_at(flat, 0.2).unwrap(), 1.0);
        assert_eq!(frontier_variance_at(flat, 0.3), Err(Error::DegenerateSlope));
    }

    #[test]
    fn curve_examples() {
        let fp = FrontierParams { r_gmv: 0.1, v_gmv: 2.0 / 3.0, slope: 0.03 };
        let curve = frontier_curve(fp, 11.0 / 3.0, 2).unwrap();
        assert_eq!(curve.len(), 2);
        assert_eq!(curve[0], (2.0 / 3.0, 0.1));
        assert_eq!(curve[1].0, 11.0 / 3.0);
        assert_relative_eq!(curve[1].1, 0.4, max_relative = 1e-12);

        let curve = frontier_curve(fp, 2.0, 11).unwrap();
        assert!(curve.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
        assert!(frontier_curve(fp, 0.5, 10).is_err());
        assert!(frontier_curve(fp, 2.0, 1).is_err());
    }

    fn spd_strategy(p: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(-1.0f64..1.0, p * p),
            prop::collection::vec(-0.5f64..0.5, p),
        )
    }

    fn spd_from(raw: &[f64], p: usize) -> DMatrix<f64> {
        let a = DMatrix::from_column_slice(p, p, raw);
        &a * a.transpose() + DMatrix::identity(p, p) * 0.5
    }

    proptest! {
        #[test]
        fn slope_nonnegative_and_cauchy_schwarz((raw, mu) in spd_strategy(4)) {
            let sigma = CovarianceMatrix::new(spd_from(&raw, 4)).unwrap();
            let mu = MeanVector::from_slice(&mu).unwrap();
            let mc = merton_constants(&mu, &sigma).unwrap();
            prop_assert!(mc.a * mc.c_m - mc.b * mc.b >= -1e-12 * mc.a * mc.c_m);
            prop_assert!(frontier_params(&mu, &sigma).unwrap().slope >= 0.0);
        }

        #[test]
        fn merton_round_trip(r in -1.0f64..1.0, v in 0.01f64..10.0, s in 0.0f64..5.0) {
            let fp = FrontierParams { r_gmv: r, v_gmv: v, slope: s };
            let back = from_merton(to_merton(fp).unwrap()).unwrap();
            prop_assert!((back.r_gmv - r).abs() <= 1e-12 * r.abs().max(1.0));
            prop_assert!((back.v_gmv - v).abs() <= 1e-12 * v);
            prop_assert!((back.slope - s).abs() <= 1e-12 * (s + r * r / v).max(1e-300));
        }

        #[test]
        fn permutation_invariance((raw, mu) in spd_strategy(4), shift in 1usize..4) {
            let sigma = spd_from(&raw, 4);
            let perm: Vec<usize> = (0..4).map(|i| (i + shift) % 4).collect();
            let sigma_p = DMatrix::from_fn(4, 4, |i, j| sigma[(perm[i], perm[j])]);
            let mu_p: Vec<f64> = perm.iter().map(|&i| mu[i]).collect();
            let a = frontier_params(&MeanVector::from_slice(&mu).unwrap(), &CovarianceMatrix::new(sigma).unwrap()).unwrap();
            let b = frontier_params(&MeanVector::from_slice(&mu_p).unwrap(), &CovarianceMatrix::new(sigma_p).unwrap()).unwrap();
            prop_assert!((a.r_gmv - b.r_gmv).abs() <= 1e-10 * a.r_gmv.abs().max(1.0));
            prop_assert!((a.v_gmv - b.v_gmv).abs() <= 1e-10 * a.v_gmv);
            prop_assert!((a.slope - b.slope).abs() <= 1e-10 * a.slope.max(1e-8));
        }

        #[test]
        fn variance_symmetric_around_vertex(r in -1.0f64..1.0, v in 0.01f64..10.0, s in 0.01f64..5.0, d in 0.0f64..2.0) {
            let fp = FrontierParams { r_gmv: r, v_gmv: v, slope: s };
            let up = frontier_variance_at(fp, r + d).unwrap();
            let down = frontier_variance_at(fp, r - d).unwrap();
            prop_assert!((up - down).abs() <= 1e-12 * up);
        }

        #[test]
        fn merton_and_vertex_forms_agree(a0 in 0.01f64..5.0, c in 0.1f64..10.0, t in -0.99f64..0.99, r in -2.0f64..2.0) {
            // b chosen so that a*c - b^2 > 0
            let b = t * (a0 * c).sqrt();
            let mc = MertonConstants { a: a0, b, c_m: c };
            let v1 = merton_variance_at(mc, r);
            let v2 = frontier_variance_at(from_merton(mc).unwrap(), r).unwrap();
            prop_assert!((v1 - v2).abs() <= 1e-10 * v1.abs());
        }
    }
}
