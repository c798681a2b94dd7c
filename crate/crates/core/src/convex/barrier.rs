//! Log-barrier Newton method shared by all solvers in this module.

use nalgebra::{DMatrix, DMatrixViewMut, DVector};

use super::linalg::solve_spd;
use super::{QuadForm, Quadratic, SolverError};

/// A convex inequality `f(x) <= 0`.
pub(crate) trait ConvexConstraint: Sync {
    /// `f(x)`, or `None` when `x` is outside the domain of `f`.
    fn value(&self, x: &DVector<f64>) -> Option<f64>;

    /// Returns `∇f(x)` and adds `scale · ∇²f(x)` into `hess`.
    ///
    /// Only called at points where [`value`](Self::value) returned `Some`.
    fn gradient_and_hessian(
        &self,
        x: &DVector<f64>,
        scale: f64,
        hess: &mut DMatrixViewMut<'_, f64>,
    ) -> DVector<f64>;
}

/// Barrier method parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierOptions {
    pub t0: f64,
    pub mu: f64,
    /// Armijo sufficient-decrease fraction.
    pub alpha: f64,
    /// Backtracking shrink factor.
    pub beta: f64,
    pub max_outer: usize,
    /// Newton steps per centering. A start at distance `f` from the boundary
    /// costs about `log2(1/f)` damped steps before the quadratic phase.
    pub max_inner: usize,
    /// Centering stops once half the squared Newton decrement drops below this.
    pub newton_tol: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions {
            t0: 1.0,
            mu: 10.0,
            alpha: 0.3,
            beta: 0.5,
            max_outer: 200,
            max_inner: 200,
            newton_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BarrierResult {
    pub x: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub objective_trace: Vec<f64>,
}

struct Evaluated {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

fn barrier_value(obj: &Quadratic, cons: &[&dyn ConvexConstraint], t: f64, x: &DVector<f64>) -> Option<f64> {
    let mut v = t * obj.value(x);
    for c in cons {
        let f = c.value(x)?;
        if !(f < 0.0) {
            return None;
        }
        v -= (-f).ln();
    }
    Some(v)
}

fn barrier_eval(obj: &Quadratic, cons: &[&dyn ConvexConstraint], t: f64, x: &DVector<f64>) -> Option<Evaluated> {
    let n = x.len();
    let mut hess = DMatrix::zeros(n, n);
    obj.quad.add_to(&mut hess.view_mut((0, 0), (n, n)), t);
    let mut grad = obj.gradient(x) * t;
    let mut value = t * obj.value(x);
    for c in cons {
        let f = c.value(x)?;
        if !(f < 0.0) {
            return None;
        }
        value -= (-f).ln();
        let g = c.gradient_and_hessian(x, 1.0 / (-f), &mut hess.view_mut((0, 0), (n, n)));
        grad.axpy(1.0 / (-f), &g, 1.0);
        hess.ger(1.0 / (f * f), &g, &g, 1.0);
    }
    Some(Evaluated { value, grad, hess })
}

/// Minimizes `obj` subject to `cons` from a strictly feasible `x0`.
///
/// `stop` is checked after every Newton step; when it returns true the
/// current iterate is returned immediately (used by phase I).
pub(crate) fn barrier_minimize(
    obj: &Quadratic,
    cons: &[&dyn ConvexConstraint],
    x0: DVector<f64>,
    tol: f64,
    opts: &BarrierOptions,
    stop: Option<&dyn Fn(&DVector<f64>) -> bool>,
) -> Result<BarrierResult, SolverError> {
    let m = cons.len() as f64;
    let mut x = x0;
    if barrier_value(obj, cons, 1.0, &x).is_none() {
        return Err(SolverError::BadStart);
    }
    let mut t = opts.t0;
    let mut trace = Vec::new();
    for _outer in 0..opts.max_outer {
        let mut centered = false;
        let mut last_decrement = f64::INFINITY;
        for _inner in 0..opts.max_inner {
            let ev = barrier_eval(obj, cons, t, &x).ok_or(SolverError::NonPsdIterate)?;
            let neg_grad = -&ev.grad;
            let step = solve_spd(&ev.hess, &neg_grad).ok_or(SolverError::NotPositiveDefinite)?;
            let decrement = -ev.grad.dot(&step);
            if !(decrement.is_finite()) {
                return Err(SolverError::NotPositiveDefinite);
            }
            last_decrement = decrement.max(0.0);
            if decrement * 0.5 <= opts.newton_tol {
                centered = true;
                break;
            }
            let mut s = 1.0;
            let mut accepted = None;
            // Below this predicted decrease the barrier value cannot resolve progress.
            let resolvable = 1e-14 * ev.value.abs().max(1.0);
            while opts.alpha * s * decrement > resolvable {
                let cand = &x + &step * s;
                if let Some(v) = barrier_value(obj, cons, t, &cand) {
                    if v <= ev.value - opts.alpha * s * decrement {
                        accepted = Some(cand);
                        break;
                    }
                }
                s *= opts.beta;
            }
            match accepted {
                Some(cand) => x = cand,
                None => {
                    // Step too small to make progress in floating point.
                    centered = true;
                    break;
                }
            }
            if let Some(stop) = stop {
                if stop(&x) {
                    return Ok(BarrierResult {
                        objective: obj.value(&x),
                        x,
                        kkt_residual: f64::NAN,
                        objective_trace: trace,
                    });
                }
            }
        }
        if !centered {
            return Err(SolverError::MaxIterations);
        }
        trace.push(obj.value(&x));
        let gap = m / t;
        if gap <= tol {
            // Dual residual in the Hessian norm of the centering problem.
            let stationarity = last_decrement.sqrt() / t;
            return Ok(BarrierResult {
                objective: obj.value(&x),
                kkt_residual: stationarity.max(gap),
                x,
                objective_trace: trace,
            });
        }
        t *= opts.mu;
    }
    Err(SolverError::MaxIterations)
}

/// `f(x) - s <= 0` over the augmented variable `(x, s)`.
struct Shifted<'a> {
    inner: &'a dyn ConvexConstraint,
    n: usize,
}

impl ConvexConstraint for Shifted<'_> {
    fn value(&self, z: &DVector<f64>) -> Option<f64> {
        let x = z.rows(0, self.n).into_owned();
        Some(self.inner.value(&x)? - z[self.n])
    }

    fn gradient_and_hessian(
        &self,
        z: &DVector<f64>,
        scale: f64,
        hess: &mut DMatrixViewMut<'_, f64>,
    ) -> DVector<f64> {
        let x = z.rows(0, self.n).into_owned();
        let g = self
            .inner
            .gradient_and_hessian(&x, scale, &mut hess.view_mut((0, 0), (self.n, self.n)));
        let mut out = DVector::zeros(self.n + 1);
        out.rows_mut(0, self.n).copy_from(&g);
        out[self.n] = -1.0;
        out
    }
}

/// `lower - s <= 0`
struct SlackFloor {
    n: usize,
    lower: f64,
}

impl ConvexConstraint for SlackFloor {
    fn value(&self, z: &DVector<f64>) -> Option<f64> {
        Some(self.lower - z[self.n])
    }

    fn gradient_and_hessian(&self, _z: &DVector<f64>, _scale: f64, _hess: &mut DMatrixViewMut<'_, f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.n + 1);
        g[self.n] = -1.0;
        g
    }
}

/// Finds a strictly feasible point by minimizing the common slack `s` in
/// `f_i(x) <= s`, starting from `x0` (which must lie in every domain).
pub(crate) fn phase_one(
    cons: &[&dyn ConvexConstraint],
    x0: &DVector<f64>,
    opts: &BarrierOptions,
) -> Result<DVector<f64>, SolverError> {
    let n = x0.len();
    let values: Vec<f64> = cons
        .iter()
        .map(|c| c.value(x0).ok_or(SolverError::BadStart))
        .collect::<Result<_, _>>()?;
    let worst = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if worst < 0.0 || cons.is_empty() {
        return Ok(x0.clone());
    }
    let s0 = worst + 1.0 + 0.1 * worst.abs();
    let mut z0 = DVector::zeros(n + 1);
    z0.rows_mut(0, n).copy_from(x0);
    z0[n] = s0;

    let shifted: Vec<Shifted> = cons.iter().map(|&c| Shifted { inner: c, n }).collect();
    let floor = SlackFloor { n, lower: -1.0 - worst.abs() };
    let mut all: Vec<&dyn ConvexConstraint> = shifted.iter().map(|c| c as &dyn ConvexConstraint).collect();
    all.push(&floor);

    let mut lin = DVector::zeros(n + 1);
    lin[n] = 1.0;
    let obj = Quadratic { quad: QuadForm::Zero, lin, constant: 0.0 };
    let stop = |z: &DVector<f64>| z[n] < 0.0;
    let res = barrier_minimize(&obj, &all, z0, 1e-10 * (1.0 + worst.abs()), opts, Some(&stop))?;
    let x = res.x.rows(0, n).into_owned();
    if res.x[n] < 0.0 {
        return Ok(x);
    }
    let worst_idx = cons
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.value(&x).map(|v| (i, v)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);
    Err(SolverError::Infeasible { slack: res.x[n], worst: worst_idx })
}
