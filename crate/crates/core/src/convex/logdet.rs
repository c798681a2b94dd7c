//! Barrier solver for programs with `log2 det` lower-bound constraints.

use std::f64::consts::LN_2;

use nalgebra::{DMatrixViewMut, DVector};

use super::barrier::{barrier_minimize, phase_one, BarrierOptions, ConvexConstraint};
use super::linalg::{inv_hpd, is_hermitian, ln_det_hpd, CMatrix, HERMITIAN_TOL};
use super::qcqp::QuadConstraint;
use super::{Quadratic, SolverError};

/// One diagonal block `M(x) = base + Σ_l x_l S_l` of a block-diagonal
/// log-det argument. All matrices Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct LogDetBlock {
    pub base: CMatrix,
    pub terms: Vec<(usize, CMatrix)>,
}

impl LogDetBlock {
    pub fn matrix(&self, x: &DVector<f64>) -> CMatrix {
        let mut m = self.base.clone();
        for (l, s) in &self.terms {
            m.zip_apply(s, |a, b| *a += b * x[*l]);
        }
        m
    }
}

/// `Σ_b log2 det M_b(x) - lin^T x >= rhs`
#[derive(Debug, Clone, PartialEq)]
pub struct LogDetConstraint {
    pub blocks: Vec<LogDetBlock>,
    pub lin: DVector<f64>,
    pub rhs: f64,
}

impl LogDetConstraint {
    /// `Σ_b log2 det M_b(x)`, `None` when some block is not PD.
    pub fn log2det(&self, x: &DVector<f64>) -> Option<f64> {
        let mut acc = 0.0;
        for b in &self.blocks {
            acc += ln_det_hpd(&b.matrix(x)).ok()? / LN_2;
        }
        Some(acc)
    }

    /// Slack `Σ log2det - lin^T x - rhs` (nonnegative when satisfied).
    pub fn slack(&self, x: &DVector<f64>) -> Option<f64> {
        Some(self.log2det(x)? - self.lin.dot(x) - self.rhs)
    }

    /// Gradient of `Σ_b log2 det M_b(x)`.
    pub fn log2det_gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let mut g = DVector::zeros(x.len());
        for b in &self.blocks {
            let inv = inv_hpd(&b.matrix(x)).ok()?;
            for (l, s) in &b.terms {
                g[*l] += trace_product(&inv, s) / LN_2;
            }
        }
        Some(g)
    }

    fn validate(&self, n: usize) -> Result<(), SolverError> {
        if self.lin.len() != n {
            return Err(SolverError::DimensionMismatch("log-det linear term".into()));
        }
        for b in &self.blocks {
            if !is_hermitian(&b.base, HERMITIAN_TOL) {
                return Err(SolverError::NotHermitian);
            }
            for (l, s) in &b.terms {
                if *l >= n || s.shape() != b.base.shape() {
                    return Err(SolverError::DimensionMismatch("log-det term".into()));
                }
                if !is_hermitian(s, HERMITIAN_TOL) {
                    return Err(SolverError::NotHermitian);
                }
            }
        }
        Ok(())
    }
}

/// `Re tr(A B)`
fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

impl ConvexConstraint for LogDetConstraint {
    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        self.slack(x).map(|s| -s)
    }

    fn gradient_and_hessian(
        &self,
        x: &DVector<f64>,
        scale: f64,
        hess: &mut DMatrixViewMut<'_, f64>,
    ) -> DVector<f64> {
        let mut g = self.lin.clone();
        for b in &self.blocks {
            let inv = inv_hpd(&b.matrix(x)).expect("domain checked by value()");
            let products: Vec<(usize, CMatrix)> = b.terms.iter().map(|(l, s)| (*l, &inv * s)).collect();
            for (i, (l, tl)) in products.iter().enumerate() {
                g[*l] -= (0..tl.nrows()).map(|d| tl[(d, d)].re).sum::<f64>() / LN_2;
                for (m, tm) in products.iter().skip(i) {
                    let h = scale * trace_product(tl, tm) / LN_2;
                    hess[(*l, *m)] += h;
                    if l != m {
                        hess[(*m, *l)] += h;
                    }
                }
            }
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogDetProblem {
    pub objective: Quadratic,
    pub quad_constraints: Vec<QuadConstraint>,
    pub logdet_constraints: Vec<LogDetConstraint>,
    /// Must make every log-det argument PD; need not be feasible.
    pub start: Option<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct LogDetSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub objective_trace: Vec<f64>,
}

/// Barrier Newton over log-det and quadratic constraints.
pub fn solve_logdet_program(problem: &LogDetProblem, tol: f64) -> Result<LogDetSolution, SolverError> {
    let n = problem.objective.dim();
    for c in &problem.logdet_constraints {
        c.validate(n)?;
    }
    for c in &problem.quad_constraints {
        if c.lin.len() != n {
            return Err(SolverError::DimensionMismatch("quadratic constraint".into()));
        }
    }
    let mut cons: Vec<&dyn ConvexConstraint> = Vec::new();
    cons.extend(problem.quad_constraints.iter().map(|c| c as &dyn ConvexConstraint));
    cons.extend(problem.logdet_constraints.iter().map(|c| c as &dyn ConvexConstraint));
    let x0 = problem.start.clone().unwrap_or_else(|| DVector::zeros(n));
    let opts = BarrierOptions::default();
    let x0 = phase_one(&cons, &x0, &opts)?;
    let res = barrier_minimize(&problem.objective, &cons, x0, tol, &opts, None)?;
    Ok(LogDetSolution {
        x: res.x,
        objective: res.objective,
        kkt_residual: res.kkt_residual,
        objective_trace: res.objective_trace,
    })
}

#[cfg(test)]
/// Dense real matrix of `Re tr(M^{-1} S_l M^{-1} S_m) / ln 2` (negated Hessian
/// of the log-det sum).
fn logdet_curvature(c: &LogDetConstraint, x: &DVector<f64>) -> Option<nalgebra::DMatrix<f64>> {
    let n = x.len();
    let mut h = nalgebra::DMatrix::zeros(n, n);
    if c.value(x).is_none() {
        return None;
    }
    c.gradient_and_hessian(x, 1.0, &mut h.view_mut((0, 0), (n, n)));
    Some(h)
}
