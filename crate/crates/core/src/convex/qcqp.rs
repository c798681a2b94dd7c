//! Convex QCQP and the epigraph max-min solver built on it.

use nalgebra::{DMatrixViewMut, DVector};

use super::barrier::{barrier_minimize, phase_one, BarrierOptions, ConvexConstraint};
use super::{QuadForm, Quadratic, SolverError};

/// Direction of a quadratic constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `½ x^T P x + q^T x + c <= 0`
    AtMost,
    /// `-½ x^T P x + q^T x + c >= 0`
    AtLeast,
}

/// A convex quadratic constraint. `quad` is always PSD; the sense decides
/// whether it enters with a plus (`AtMost`) or minus (`AtLeast`) sign.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadConstraint {
    pub quad: QuadForm,
    pub lin: DVector<f64>,
    pub constant: f64,
    pub sense: Sense,
}

impl QuadConstraint {
    /// Value in the native orientation of `sense`.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let q = 0.5 * self.quad.eval(x);
        let l = self.lin.dot(x) + self.constant;
        match self.sense {
            Sense::AtMost => q + l,
            Sense::AtLeast => -q + l,
        }
    }

    /// Violation measured as a nonnegative number (0 when satisfied).
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        match self.sense {
            Sense::AtMost => self.value(x).max(0.0),
            Sense::AtLeast => (-self.value(x)).max(0.0),
        }
    }

    /// `f(x) <= 0` form value.
    fn convex_value(&self, x: &DVector<f64>) -> f64 {
        match self.sense {
            Sense::AtMost => self.value(x),
            Sense::AtLeast => -self.value(x),
        }
    }
}

impl ConvexConstraint for QuadConstraint {
    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        Some(self.convex_value(x))
    }

    fn gradient_and_hessian(
        &self,
        x: &DVector<f64>,
        scale: f64,
        hess: &mut DMatrixViewMut<'_, f64>,
    ) -> DVector<f64> {
        self.quad.add_to(hess, scale);
        let px = self.quad.apply(x);
        match self.sense {
            Sense::AtMost => px + &self.lin,
            Sense::AtLeast => px - &self.lin,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcqpProblem {
    pub objective: Quadratic,
    pub constraints: Vec<QuadConstraint>,
    /// Optional strictly feasible starting point; phase I runs otherwise.
    pub start: Option<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct QcqpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    /// Objective after each centering step.
    pub objective_trace: Vec<f64>,
}

const PSD_TOL: f64 = 1e-10;

impl QcqpProblem {
    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    fn validate(&self) -> Result<(), SolverError> {
        let n = self.dim();
        if let Some(d) = self.objective.quad.dim() {
            if d != n {
                return Err(SolverError::DimensionMismatch(format!("objective quad {d} vs {n}")));
            }
        }
        if !self.objective.quad.is_psd(PSD_TOL) {
            return Err(SolverError::NotPositiveDefinite);
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.lin.len() != n || c.quad.dim().is_some_and(|d| d != n) {
                return Err(SolverError::DimensionMismatch(format!("constraint {i}")));
            }
            if !c.quad.is_psd(PSD_TOL) {
                return Err(SolverError::NotPsdConstraint(i));
            }
        }
        if let Some(s) = &self.start {
            if s.len() != n {
                return Err(SolverError::DimensionMismatch("start".into()));
            }
        }
        Ok(())
    }
}

/// Solves a convex QCQP to duality gap `tol` with default barrier settings.
pub fn solve_qcqp(problem: &QcqpProblem, tol: f64) -> Result<QcqpSolution, SolverError> {
    solve_qcqp_with(problem, tol, &BarrierOptions::default())
}

pub fn solve_qcqp_with(
    problem: &QcqpProblem,
    tol: f64,
    opts: &BarrierOptions,
) -> Result<QcqpSolution, SolverError> {
    problem.validate()?;
    let n = problem.dim();
    let cons: Vec<&dyn ConvexConstraint> = problem
        .constraints
        .iter()
        .map(|c| c as &dyn ConvexConstraint)
        .collect();
    let x0 = problem.start.clone().unwrap_or_else(|| DVector::zeros(n));
    let x0 = phase_one(&cons, &x0, opts)?;
    let res = barrier_minimize(&problem.objective, &cons, x0, tol, opts, None)?;
    Ok(QcqpSolution {
        x: res.x,
        objective: res.objective,
        kkt_residual: res.kkt_residual,
        objective_trace: res.objective_trace,
    })
}

/// `-½ x^T H x + g^T x + c` with `H` PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcaveQuadratic {
    pub curvature: QuadForm,
    pub lin: DVector<f64>,
    pub constant: f64,
}

impl ConcaveQuadratic {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        -0.5 * self.curvature.eval(x) + self.lin.dot(x) + self.constant
    }
}

/// Maximizes `min_k piece_k(x)` by solving `max t s.t. piece_k(x) >= t`.
///
/// Returns the maximizer `x` (without the epigraph variable).
pub fn solve_maxmin_concave_quadratics(
    pieces: &[ConcaveQuadratic],
    start: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>, SolverError> {
    let n = start.len();
    if pieces.is_empty() {
        return Ok(start.clone());
    }
    let constraints: Vec<QuadConstraint> = pieces
        .iter()
        .map(|p| {
            if p.lin.len() != n {
                return Err(SolverError::DimensionMismatch("piece".into()));
            }
            // piece(x) - t >= 0
            let mut lin = DVector::zeros(n + 1);
            lin.rows_mut(0, n).copy_from(&p.lin);
            lin[n] = -1.0;
            Ok(QuadConstraint {
                quad: p.curvature.embedded(n + 1),
                lin,
                constant: p.constant,
                sense: Sense::AtLeast,
            })
        })
        .collect::<Result<_, _>>()?;
    let floor = pieces
        .iter()
        .map(|p| p.value(start))
        .fold(f64::INFINITY, f64::min);
    let mut z0 = DVector::zeros(n + 1);
    z0.rows_mut(0, n).copy_from(start);
    z0[n] = floor - 1.0 - 1e-3 * floor.abs();
    let mut lin = DVector::zeros(n + 1);
    lin[n] = -1.0;
    let problem = QcqpProblem {
        objective: Quadratic::linear(lin, 0.0),
        constraints,
        start: Some(z0),
    };
    let sol = solve_qcqp(&problem, tol)?;
    Ok(sol.x.rows(0, n).into_owned())
}
