//! Precoder update by fractional programming.
//!
//! For fixed phases each constraint reads `Σ_j a(j)^H B(j)^{-1} a(j) ≥ J' τ_min`.
//! With `y(j) = B(j)^{-1} a(j)` frozen, `2 Re{y^H a} - y^H B y` is a concave
//! quadratic lower bound in the precoders that touches at the current point,
//! so each inner step is a convex QCQP whose solution can only lower power.

use nalgebra::DVector;
use num_complex::Complex64;

use super::{columns_of, fp_auxiliary, SicError, SinrConstraint};
use crate::channel::EffectiveChannel;
use crate::convex::{solve_qcqp, QcqpProblem, QuadConstraint, QuadForm, Quadratic, Sense};
use crate::convex::linalg::CVector;
use crate::transceiver::PrecoderSet;

#[derive(Debug, Clone, PartialEq)]
pub struct FpOptions {
    /// Stop when one inner step lowers power by less than this fraction.
    pub tol: f64,
    pub max_iters: usize,
    /// Duality gap of each QCQP relative to its objective.
    pub solver_tol: f64,
    /// Constraints kept in the first working set of a QCQP.
    pub working_set: usize,
}

impl Default for FpOptions {
    fn default() -> Self {
        FpOptions { tol: 1e-4, max_iters: 200, solver_tol: 1e-9, working_set: 24 }
    }
}

#[derive(Debug, Clone)]
pub struct FpOutcome {
    pub precoders: PrecoderSet,
    /// Average power after the feasible start and after every accepted step.
    pub power_trace: Vec<f64>,
    /// Largest `|surrogate - a^H B^{-1} a|` observed right after a `y` update.
    pub max_tightness_error: f64,
    pub iterations: usize,
}

/// Largest number of power doublings tried when looking for a feasible start.
const MAX_DOUBLINGS: usize = 200;

fn feasible(columns: &[Vec<CVector>], constraints: &[SinrConstraint]) -> Result<Option<usize>, SicError> {
    let mut worst = None;
    let mut worst_ratio = f64::INFINITY;
    for (i, c) in constraints.iter().enumerate() {
        let (_, tau) = fp_auxiliary(columns, c)?;
        let ratio = tau / c.tau_threshold();
        if !(ratio >= 1.0) && ratio < worst_ratio {
            worst_ratio = ratio;
            worst = Some(i);
        }
    }
    Ok(worst)
}

/// Surrogate constraint of `c` around the current precoders, in the scaled
/// variables `x = interleave(w) / s`.
struct Surrogate {
    constraint: QuadConstraint,
    /// Surrogate minus `J' τ_min` at the current point.
    value_at_current: f64,
    /// `Σ_j a^H B^{-1} a` minus `J' τ_min` at the current point.
    exact_at_current: f64,
}

fn surrogate(
    g: &[Vec<CVector>],
    precoders: &PrecoderSet,
    c: &SinrConstraint,
    s: f64,
) -> Result<Surrogate, SicError> {
    let k = g.len();
    let jp = g[0].len();
    let n = 2 * k * jp;
    let columns = columns_of(g, precoders);
    let (ys, tau) = fp_auxiliary(&columns, c)?;
    let floor = jp as f64 * c.tau_threshold();
    let mut diag = DVector::zeros(n);
    let mut lin = DVector::zeros(n);
    let mut constant = -floor;
    let mut value = -floor;
    for (j, y) in ys.iter().enumerate() {
        constant -= y.norm_squared();
        value -= y.norm_squared();
        for kk in 0..k {
            let wt = c.weights[kk];
            let yg = y.dotc(&g[kk][j]);
            let idx = 2 * (kk * jp + j);
            let w = precoders.w[kk][j];
            if wt != 0.0 {
                let p = 2.0 * wt * yg.norm_sqr() * s * s;
                diag[idx] = p;
                diag[idx + 1] = p;
                value -= wt * (yg * w).norm_sqr();
            }
            if kk == c.user {
                lin[idx] = 2.0 * s * yg.re;
                lin[idx + 1] = -2.0 * s * yg.im;
                value += 2.0 * (yg * w).re;
            }
        }
    }
    Ok(Surrogate {
        constraint: QuadConstraint { quad: QuadForm::Diagonal(diag), lin, constant, sense: Sense::AtLeast },
        value_at_current: value,
        exact_at_current: jp as f64 * tau - floor,
    })
}

fn to_vars(p: &PrecoderSet, s: f64) -> DVector<f64> {
    DVector::from_iterator(2 * p.k() * p.j_prime(), p.w.iter().flatten().flat_map(|z| [z.re / s, z.im / s]))
}

fn from_vars(x: &DVector<f64>, k: usize, jp: usize, s: f64) -> PrecoderSet {
    PrecoderSet {
        w: (0..k)
            .map(|kk| (0..jp).map(|j| Complex64::new(x[2 * (kk * jp + j)] * s, x[2 * (kk * jp + j) + 1] * s)).collect())
            .collect(),
    }
}

/// Iterations of the per-user power-control search.
const POWER_CONTROL_ITERS: usize = 400;
/// Overshoot of each power-control step, so the fixed point is strictly feasible.
const POWER_CONTROL_MARGIN: f64 = 1.02;

/// Per-user power control: every user's power is scaled by the largest
/// `target / ρ` over its constraints until all constraints hold. Returns
/// `None` when the iteration does not reach feasibility.
fn power_control(
    g: &[Vec<CVector>],
    constraints: &[SinrConstraint],
    start: &PrecoderSet,
) -> Result<Option<PrecoderSet>, SicError> {
    let k = start.k();
    let mut w = start.clone();
    let ceiling = start.total_power() * 1e12;
    for _ in 0..POWER_CONTROL_ITERS {
        let columns = columns_of(g, &w);
        let mut ratio = vec![0.0f64; k];
        let mut feasible = true;
        for c in constraints {
            let (_, tau) = fp_auxiliary(&columns, c)?;
            feasible &= tau >= c.tau_threshold();
            let rho = c.sinr(tau);
            let r = if rho > 0.0 { c.target / rho } else { f64::INFINITY };
            ratio[c.user] = ratio[c.user].max(r);
        }
        if feasible {
            return Ok(Some(w));
        }
        for (wk, r) in w.w.iter_mut().zip(&ratio) {
            if *r > 0.0 {
                let step = (r * POWER_CONTROL_MARGIN).clamp(1e-3, 1e3).sqrt();
                wk.iter_mut().for_each(|z| *z *= step);
            }
        }
        if !(w.total_power() < ceiling) {
            return Ok(None);
        }
    }
    Ok(None)
}

/// A feasible starting point: `init` when it is feasible; otherwise per-user
/// power control from a unit-SNR uniform allocation, then uniform doubling.
fn feasible_start(
    channel: &EffectiveChannel,
    g: &[Vec<CVector>],
    constraints: &[SinrConstraint],
    init: Option<&PrecoderSet>,
) -> Result<PrecoderSet, SicError> {
    let k = channel.k();
    let jp = channel.subcarriers();
    let mut w = match init {
        Some(p) if p.total_power() > 0.0 => p.clone(),
        _ => {
            let gain = g
                .iter()
                .flatten()
                .map(|v| v.norm_squared())
                .fold(f64::INFINITY, f64::min)
                .max(1e-300);
            let target = constraints.iter().map(|c| c.target).fold(0.0, f64::max).max(1e-6);
            PrecoderSet::uniform(k, jp, (target / gain).sqrt().min(1e150))
        }
    };
    // Users with no precoder energy get a small uniform share.
    let floor = (w.total_power() / (k * jp) as f64).sqrt().max(1e-300);
    for wk in w.w.iter_mut() {
        if wk.iter().all(|z| z.norm_sqr() == 0.0) {
            wk.iter_mut().for_each(|z| *z = Complex64::new(floor, 0.0));
        }
    }
    if init.is_none() {
        if let Some(pc) = power_control(g, constraints, &w)? {
            return Ok(pc);
        }
    }
    let mut last = None;
    for _ in 0..MAX_DOUBLINGS {
        match feasible(&columns_of(g, &w), constraints)? {
            None => return Ok(w),
            Some(i) => last = Some(i),
        }
        w = w.scaled(std::f64::consts::SQRT_2);
    }
    let i = last.unwrap_or(0);
    Err(SicError::Infeasible { constraint: i, user: constraints[i].user })
}

/// Minimizes total precoder power subject to `constraints` at phases `theta`
/// on the whitened channel `channel`. `init`, when given, is the warm start.
pub fn fp_precode(
    channel: &EffectiveChannel,
    theta: &[Complex64],
    constraints: &[SinrConstraint],
    init: Option<&PrecoderSet>,
    opts: &FpOptions,
) -> Result<FpOutcome, SicError> {
    let k = channel.k();
    let jp = channel.subcarriers();
    if constraints.iter().any(|c| c.user >= k || c.weights.len() != k || !(c.target >= 0.0)) {
        return Err(SicError::InvalidRequest("constraint does not match the channel".into()));
    }
    if init.is_some_and(|p| p.k() != k || p.j_prime() != jp) {
        return Err(SicError::InvalidRequest("warm start shape".into()));
    }
    let g = channel.compose(theta);
    let mut w = feasible_start(channel, &g, constraints, init)?;
    let mut power = w.average_power();
    let mut trace = vec![power];
    let mut max_tight: f64 = 0.0;
    let mut iterations = 0;
    for _ in 0..opts.max_iters {
        iterations += 1;
        let s = (w.total_power() / (2 * k * jp) as f64).sqrt();
        let sur: Vec<Surrogate> = constraints.iter().map(|c| surrogate(&g, &w, c, s)).collect::<Result<_, _>>()?;
        for su in &sur {
            let err = (su.value_at_current - su.exact_at_current).abs();
            max_tight = max_tight.max(err / su.exact_at_current.abs().max(1.0));
        }
        let x0 = to_vars(&w, s);
        let x = solve_with_working_set(&sur, &x0, opts)?;
        let cand = from_vars(&x, k, jp, s);
        let new_power = cand.average_power();
        if !(new_power <= power) || feasible(&columns_of(&g, &cand), constraints)?.is_some() {
            break;
        }
        let rel = (power - new_power) / power;
        w = cand;
        power = new_power;
        trace.push(power);
        if rel < opts.tol {
            break;
        }
    }
    Ok(FpOutcome { precoders: w, power_trace: trace, max_tightness_error: max_tight, iterations })
}

/// Solves the QCQP over a growing subset of the surrogate constraints until
/// the solution satisfies all of them.
fn solve_with_working_set(sur: &[Surrogate], x0: &DVector<f64>, opts: &FpOptions) -> Result<DVector<f64>, SicError> {
    let n = x0.len();
    let mut active: Vec<usize> = if sur.len() <= opts.working_set {
        (0..sur.len()).collect()
    } else {
        let mut idx: Vec<usize> = (0..sur.len()).collect();
        idx.sort_by(|&a, &b| sur[a].exact_at_current.total_cmp(&sur[b].exact_at_current));
        idx.truncate(opts.working_set);
        idx
    };
    let objective = Quadratic { quad: QuadForm::Diagonal(DVector::from_element(n, 2.0)), lin: DVector::zeros(n), constant: 0.0 };
    let tol = opts.solver_tol * x0.norm_squared().max(1e-300);
    loop {
        let problem = QcqpProblem {
            objective: objective.clone(),
            constraints: active.iter().map(|&i| sur[i].constraint.clone()).collect(),
            start: Some(x0.clone()),
        };
        let sol = solve_qcqp(&problem, tol)?;
        let mut added = false;
        for (i, su) in sur.iter().enumerate() {
            if !active.contains(&i) && su.constraint.value(&sol.x) < 0.0 {
                active.push(i);
                added = true;
            }
        }
        if !added {
            return Ok(sol.x);
        }
    }
}
