//! Dense convex solvers shared by the optimizers.
//!
//! Everything here is real-valued. Callers with complex decision variables
//! expand each complex entry `z` into the interleaved pair `(Re z, Im z)`
//! before building a problem; see [`interleave`] and [`deinterleave`].
//!
//! Three entry points are provided:
//!
//! * [`solve_qcqp`]: convex quadratic objective, convex quadratic constraints.
//! * [`solve_maxmin_concave_quadratics`]: maximize the pointwise minimum of
//!   concave quadratics through an epigraph variable.
//! * [`solve_logdet_program`]: quadratic objective with constraints that
//!   bound a sum of `log2 det` terms of affine Hermitian matrices from below.
//!
//! All three run the same log-barrier Newton method with a phase-I slack
//! problem when no strictly feasible start is supplied.

mod barrier;
pub mod linalg;
mod logdet;
mod qcqp;

use nalgebra::{DMatrix, DVector, DMatrixViewMut};
use num_complex::Complex64;
use thiserror::Error;

pub use barrier::BarrierOptions;
pub use logdet::{solve_logdet_program, LogDetBlock, LogDetConstraint, LogDetProblem, LogDetSolution};
pub use qcqp::{
    solve_maxmin_concave_quadratics, solve_qcqp, solve_qcqp_with, ConcaveQuadratic, QcqpProblem,
    QcqpSolution, QuadConstraint, Sense,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("no strictly feasible point exists (phase-I minimum slack {slack:.3e}, worst constraint {worst:?})")]
    Infeasible { slack: f64, worst: Option<usize> },
    #[error("barrier Newton exceeded its iteration cap")]
    MaxIterations,
    #[error("line search left the domain of a log-det argument")]
    NonPsdIterate,
    #[error("matrix is not Hermitian")]
    NotHermitian,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("constraint {0} has a quadratic part that is not positive semidefinite")]
    NotPsdConstraint(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("start point is outside the problem domain")]
    BadStart,
}

/// Symmetric PSD quadratic part.
#[derive(Debug, Clone, PartialEq)]
pub enum QuadForm {
    Zero,
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

impl QuadForm {
    /// `x^T P x`
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        match self {
            QuadForm::Zero => 0.0,
            QuadForm::Diagonal(d) => d.iter().zip(x.iter()).map(|(d, x)| d * x * x).sum(),
            QuadForm::Dense(p) => x.dot(&(p * x)),
        }
    }

    /// `P x`
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            QuadForm::Zero => DVector::zeros(x.len()),
            QuadForm::Diagonal(d) => d.component_mul(x),
            QuadForm::Dense(p) => p * x,
        }
    }

    fn add_to(&self, hess: &mut DMatrixViewMut<'_, f64>, scale: f64) {
        match self {
            QuadForm::Zero => {}
            QuadForm::Diagonal(d) => {
                for (i, v) in d.iter().enumerate() {
                    hess[(i, i)] += scale * v;
                }
            }
            QuadForm::Dense(p) => {
                for j in 0..p.ncols() {
                    for i in 0..p.nrows() {
                        hess[(i, j)] += scale * p[(i, j)];
                    }
                }
            }
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            QuadForm::Zero => None,
            QuadForm::Diagonal(d) => Some(d.len()),
            QuadForm::Dense(p) => Some(p.nrows()),
        }
    }

    fn is_psd(&self, tol: f64) -> bool {
        match self {
            QuadForm::Zero => true,
            QuadForm::Diagonal(d) => d.iter().all(|&v| v >= -tol),
            QuadForm::Dense(p) => linalg::is_psd_real(p, tol),
        }
    }

    fn embedded(&self, total: usize) -> QuadForm {
        match self {
            QuadForm::Zero => QuadForm::Zero,
            QuadForm::Diagonal(d) => {
                let mut e = DVector::zeros(total);
                e.rows_mut(0, d.len()).copy_from(d);
                QuadForm::Diagonal(e)
            }
            QuadForm::Dense(p) => {
                let mut e = DMatrix::zeros(total, total);
                e.view_mut((0, 0), (p.nrows(), p.ncols())).copy_from(p);
                QuadForm::Dense(e)
            }
        }
    }
}

/// `½ x^T P x + q^T x + c` with `P` PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub quad: QuadForm,
    pub lin: DVector<f64>,
    pub constant: f64,
}

impl Quadratic {
    pub fn linear(lin: DVector<f64>, constant: f64) -> Self {
        Quadratic { quad: QuadForm::Zero, lin, constant }
    }

    pub fn dim(&self) -> usize {
        self.lin.len()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.quad.eval(x) + self.lin.dot(x) + self.constant
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.quad.apply(x) + &self.lin
    }
}

/// Expands complex entries into interleaved `(re, im)` pairs.
pub fn interleave(z: &[Complex64]) -> DVector<f64> {
    DVector::from_iterator(2 * z.len(), z.iter().flat_map(|c| [c.re, c.im]))
}

/// Inverse of [`interleave`].
pub fn deinterleave(x: &DVector<f64>) -> Vec<Complex64> {
    x.as_slice()
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect()
}
