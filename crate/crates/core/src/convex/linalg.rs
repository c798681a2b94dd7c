//! Small dense complex helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::SolverError;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative tolerance used when checking that a matrix flagged Hermitian is
/// actually Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

pub fn is_hermitian(m: &CMatrix, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.iter().map(|z| z.norm()).fold(0.0_f64, f64::max).max(1e-300);
    let n = m.nrows();
    for i in 0..n {
        for j in i..n {
            if (m[(i, j)] - m[(j, i)].conj()).norm() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

/// Lower-triangular factor `L` with `M = L L^H` and a real positive diagonal.
#[derive(Debug, Clone)]
pub struct HermitianCholesky {
    l: CMatrix,
}

impl HermitianCholesky {
    pub fn l(&self) -> &CMatrix {
        &self.l
    }

    pub fn ln_det(&self) -> f64 {
        (0..self.l.nrows()).map(|i| 2.0 * self.l[(i, i)].re.ln()).sum()
    }

    /// Solves `M X = B`.
    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        let n = self.l.nrows();
        let mut x = b.clone();
        for c in 0..x.ncols() {
            for i in 0..n {
                let mut acc = x[(i, c)];
                for k in 0..i {
                    acc -= self.l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = acc / self.l[(i, i)].re;
            }
            for i in (0..n).rev() {
                let mut acc = x[(i, c)];
                for k in i + 1..n {
                    acc -= self.l[(k, i)].conj() * x[(k, c)];
                }
                x[(i, c)] = acc / self.l[(i, i)].re;
            }
        }
        x
    }

    pub fn inverse(&self) -> CMatrix {
        let n = self.l.nrows();
        self.solve(&CMatrix::identity(n, n))
    }
}

/// Cholesky factorization of a Hermitian positive-definite matrix.
///
/// Fails with [`SolverError::NotHermitian`] when the input is not Hermitian
/// to [`HERMITIAN_TOL`] and with [`SolverError::NotPositiveDefinite`] when a
/// pivot is not strictly positive.
pub fn hermitian_cholesky(m: &CMatrix) -> Result<HermitianCholesky, SolverError> {
    if !is_hermitian(m, HERMITIAN_TOL) {
        return Err(SolverError::NotHermitian);
    }
    let n = m.nrows();
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return Err(SolverError::NotPositiveDefinite);
        }
        let d = d.sqrt();
        l[(j, j)] = Complex64::new(d, 0.0);
        for i in j + 1..n {
            let mut acc = m[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = acc / d;
        }
    }
    Ok(HermitianCholesky { l })
}

/// Natural log-determinant of a Hermitian PD matrix.
pub fn ln_det_hpd(m: &CMatrix) -> Result<f64, SolverError> {
    Ok(hermitian_cholesky(m)?.ln_det())
}

/// Inverse of a Hermitian PD matrix, symmetrized.
pub fn inv_hpd(m: &CMatrix) -> Result<CMatrix, SolverError> {
    Ok(hermitize(&hermitian_cholesky(m)?.inverse()))
}

pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).map(|z| z * 0.5)
}

/// `a a^H` for a column vector.
pub fn outer(a: &CVector) -> CMatrix {
    a * a.adjoint()
}

/// `x^H A x`, real part (A Hermitian).
pub fn quad_form(a: &CMatrix, x: &CVector) -> f64 {
    (x.adjoint() * a * x)[(0, 0)].re
}

/// Real symmetric PSD check by Cholesky with an absolute tolerance added to
/// the diagonal.
pub fn is_psd_real(p: &DMatrix<f64>, tol: f64) -> bool {
    if !p.is_square() {
        return false;
    }
    let scale = p.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
    let shifted = p + DMatrix::identity(p.nrows(), p.ncols()) * (tol * scale);
    shifted.cholesky().is_some()
}

/// Solve the symmetric positive (semi)definite system `h x = rhs`, adding a
/// growing ridge when the plain Cholesky factorization fails.
pub fn solve_spd(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    let n = h.nrows();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0_f64, f64::max).max(1e-300);
    let mut ridge = 1e-14 * scale;
    for _ in 0..30 {
        let shifted = h + DMatrix::identity(n, n) * ridge;
        if let Some(ch) = shifted.cholesky() {
            return Some(ch.solve(rhs));
        }
        ridge *= 10.0;
    }
    None
}
