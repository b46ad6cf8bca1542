//! Small dense linear-algebra layer over nalgebra.
//!
//! Every quadratic form `u' A^{-1} v` in the crate goes through a Cholesky
//! factor `A = L L'` and the whitened vectors `L^{-1} u`, `L^{-1} v`; no
//! explicit inverse is formed on the estimation path.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated before a matrix is rejected.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// The three quadratic forms that parametrize a frontier.
///
/// For a precision-like matrix `M` and a mean vector `m`:
/// `a = m'Mm`, `b = 1'Mm`, `c = 1'M1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadForms {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl QuadForms {
    pub fn scaled(self, k: f64) -> Self {
        QuadForms {
            a: k * self.a,
            b: k * self.b,
            c: k * self.c,
        }
    }

    fn from_whitened(w_one: &DVector<f64>, w_mean: &DVector<f64>) -> Self {
        QuadForms {
            a: w_mean.dot(w_mean),
            b: w_one.dot(w_mean),
            c: w_one.dot(w_one),
        }
    }
}

/// Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    /// Factor `m`; returns `None` when `m` is not numerically positive definite.
    pub fn new(m: DMatrix<f64>) -> Option<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return None;
        }
        let chol = Cholesky::new(m)?;
        let l = chol.l_dirty();
        if (0..l.nrows()).any(|i| !(l[(i, i)].is_finite() && l[(i, i)] > 0.0)) {
            return None;
        }
        Some(SpdFactor { chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// `L^{-1} v`.
    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(v)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `A^{-1} v` via two triangular solves.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Quadratic forms of `A^{-1}` with the vector `mean`.
    pub fn inverse_forms(&self, mean: &DVector<f64>) -> QuadForms {
        let ones = DVector::from_element(self.dim(), 1.0);
        QuadForms::from_whitened(&self.whiten(&ones), &self.whiten(mean))
    }

    /// Quadratic forms of `A` itself, using `L'v` as the whitened vector.
    pub fn direct_forms(&self, mean: &DVector<f64>) -> QuadForms {
        let l = self.chol.l();
        let ones = DVector::from_element(self.dim(), 1.0);
        QuadForms::from_whitened(&l.tr_mul(&ones), &l.tr_mul(mean))
    }
}

/// Largest absolute asymmetry relative to the largest absolute entry.
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..j {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Replace `m` by `(m + m')/2` when its asymmetry is within [`SYMMETRY_TOL`].
pub fn symmetrize(mut m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    let asym = relative_asymmetry(&m);
    if asym > SYMMETRY_TOL {
        return Err(Error::Asymmetric(asym));
    }
    for j in 0..m.ncols() {
        for i in 0..j {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    Ok(m)
}
