//! RIS phase update by successive convex approximation.
//!
//! With `θ = e^{iβ}` and the auxiliary vectors `y(j) = B(j)^{-1} a(j)`
//! frozen at `β̄`, the fractional-programming bound
//! `f(θ) = Σ_j 2 Re{y^H a(θ)} - y^H B(θ) y` is an exact quadratic form
//! `C1 + 2 Re{u^H θ} - θ^H U θ`. Its gradient in `β` is Lipschitz with
//! constant `κ = 2‖Γ‖_F`, giving the concave minorizer
//!
//! `l(β) = φ̄ - ρ + α (∇f(β̄)^T Δ - κ/2 ‖Δ‖²)`, `α = 1/(J' (1 - s τ̄)²)`,
//!
//! of `φ(β) - ρ`, where `s` is the user's own prior variance. Each step
//! maximizes `min_c l_c` over the tightest constraints and keeps the result
//! only if the true minimum gap over all constraints does not drop.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{columns_of, constraint_taus, fp_auxiliary, SicError, SinrConstraint};
use crate::channel::EffectiveChannel;
use crate::convex::linalg::{CMatrix, CVector};
use crate::convex::{solve_maxmin_concave_quadratics, ConcaveQuadratic, QuadForm};
use crate::transceiver::PrecoderSet;

#[derive(Debug, Clone, PartialEq)]
pub struct ScaOptions {
    /// Stop when the minimum gap improves by less than this.
    pub tol: f64,
    pub max_iters: usize,
    pub solver_tol: f64,
    /// Tightest constraints whose surrogates enter the first attempt of a
    /// step; doubled when the step fails to raise the true minimum gap.
    pub working_set: usize,
}

impl Default for ScaOptions {
    fn default() -> Self {
        ScaOptions { tol: 1e-5, max_iters: 50, solver_tol: 1e-10, working_set: 24 }
    }
}

/// Surrogate data of one constraint at the expansion point `β̄`.
#[derive(Debug, Clone)]
pub struct ScaWorkingSet {
    pub beta_bar: Vec<f64>,
    pub u: CVector,
    pub u_mat: CMatrix,
    pub c1: f64,
    /// `τ` at `β̄`.
    pub tau_bar: f64,
    /// `φ` at `β̄`.
    pub phi_bar: f64,
    pub target: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub j_prime: usize,
    /// Auxiliary vectors `y(j)` at `β̄`.
    pub y: Vec<CVector>,
}

pub fn phases(beta: &[f64]) -> Vec<Complex64> {
    beta.iter().map(|&b| Complex64::from_polar(1.0, b)).collect()
}

impl ScaWorkingSet {
    /// Builds the surrogate of `c` on the whitened channel at phases `e^{iβ̄}`.
    pub fn new(
        channel: &EffectiveChannel,
        precoders: &PrecoderSet,
        c: &SinrConstraint,
        beta_bar: &[f64],
    ) -> Result<Self, SicError> {
        let n = channel.n;
        let jp = channel.subcarriers();
        let theta = phases(beta_bar);
        let columns = columns_of(&channel.compose(&theta), precoders);
        let (ys, tau_bar) = fp_auxiliary(&columns, c)?;
        let mut u = CVector::zeros(n);
        let mut u_mat = CMatrix::zeros(n, n);
        let mut c1 = 0.0;
        for (j, y) in ys.iter().enumerate() {
            c1 -= y.norm_squared();
            for kk in 0..channel.k() {
                let w = precoders.w[kk][j];
                let wt = c.weights[kk];
                // y^H a_kk(θ) = c0 + r^T θ
                let c0 = y.dotc(&channel.direct[kk][j]) * w;
                let r: CVector = channel.cascade[kk][j].tr_mul(&y.conjugate()) * w;
                if kk == c.user {
                    u += r.conjugate();
                    c1 += 2.0 * c0.re;
                }
                if wt != 0.0 {
                    u -= r.conjugate() * (c0 * wt);
                    u_mat += r.conjugate() * r.transpose() * Complex64::new(wt, 0.0);
                    c1 -= wt * c0.norm_sqr();
                }
            }
        }
        let mut gamma = DMatrix::<f64>::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    gamma[(a, b)] = u_mat[(a, b)].norm();
                }
            }
            gamma[(a, a)] = u[a].norm() + (0..n).filter(|&b| b != a).map(|b| u_mat[(a, b)].norm()).sum::<f64>();
        }
        let s = c.weights[c.user];
        let den = (1.0 - s * tau_bar).max(1e-14);
        Ok(ScaWorkingSet {
            beta_bar: beta_bar.to_vec(),
            u,
            u_mat,
            c1,
            tau_bar,
            phi_bar: c.sinr(tau_bar),
            target: c.target,
            alpha: 1.0 / (jp as f64 * den * den),
            kappa: 2.0 * gamma.norm(),
            j_prime: jp,
            y: ys,
        })
    }

    /// `f(θ) = C1 + 2 Re{u^H θ} - θ^H U θ`, equal to `J'` times the
    /// `τ`-scale bound.
    pub fn f(&self, beta: &[f64]) -> f64 {
        let th = CVector::from_vec(phases(beta));
        self.c1 + 2.0 * self.u.dotc(&th).re - th.dotc(&(&self.u_mat * &th)).re
    }

    /// `τ`-scale bound `f/J'`.
    pub fn l2(&self, beta: &[f64]) -> f64 {
        self.f(beta) / self.j_prime as f64
    }

    /// Gradient of [`Self::f`] in `β`: `2 Re{i θ* ⊙ (Uθ - u)}`.
    pub fn grad_f(&self, beta: &[f64]) -> DVector<f64> {
        let th = CVector::from_vec(phases(beta));
        let d = &self.u_mat * &th - &self.u;
        DVector::from_iterator(th.len(), th.iter().zip(d.iter()).map(|(t, x)| 2.0 * (Complex64::i() * t.conj() * x).re))
    }

    /// The minorizer `l(β)` of `φ(β) - ρ`.
    pub fn surrogate(&self, beta: &[f64]) -> f64 {
        let g = self.grad_f(&self.beta_bar);
        let delta = DVector::from_iterator(beta.len(), beta.iter().zip(&self.beta_bar).map(|(a, b)| a - b));
        self.phi_bar - self.target + self.alpha * (g.dot(&delta) - 0.5 * self.kappa * delta.norm_squared())
    }

    /// The minorizer as a concave quadratic in `Δ = β - β̄`.
    fn piece(&self) -> ConcaveQuadratic {
        let n = self.beta_bar.len();
        ConcaveQuadratic {
            curvature: QuadForm::Diagonal(DVector::from_element(n, self.alpha * self.kappa)),
            lin: self.grad_f(&self.beta_bar) * self.alpha,
            constant: self.phi_bar - self.target,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScaOutcome {
    pub theta: Vec<Complex64>,
    pub beta: Vec<f64>,
    /// True minimum gap at the start and after every accepted step.
    pub gap_trace: Vec<f64>,
}

/// Maximizes `min_c (ρ_c - target_c)` over unit-modulus phases starting at
/// `theta0`, for fixed precoders, on the whitened channel `channel`.
pub fn sca_beamform(
    channel: &EffectiveChannel,
    precoders: &PrecoderSet,
    constraints: &[SinrConstraint],
    theta0: &[Complex64],
    opts: &ScaOptions,
) -> Result<ScaOutcome, SicError> {
    let mut beta: Vec<f64> = theta0.iter().map(|t| t.arg()).collect();
    let gaps_at = |b: &[f64]| -> Result<Vec<f64>, SicError> {
        let taus = constraint_taus(&columns_of(&channel.compose(&phases(b)), precoders), constraints)?;
        Ok(taus.iter().zip(constraints).map(|(&t, c)| c.sinr(t) - c.target).collect())
    };
    let min_of = |g: &[f64]| g.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut gaps = gaps_at(&beta)?;
    let mut gap = min_of(&gaps);
    let mut trace = vec![gap];
    if channel.n == 0 || constraints.is_empty() {
        return Ok(ScaOutcome { theta: phases(&beta), beta, gap_trace: trace });
    }
    'outer: for _ in 0..opts.max_iters {
        let mut order: Vec<usize> = (0..constraints.len()).collect();
        order.sort_by(|&a, &b| gaps[a].total_cmp(&gaps[b]));
        let mut size = opts.working_set.max(1).min(order.len());
        let accepted = loop {
            let pieces: Vec<ConcaveQuadratic> = order[..size]
                .iter()
                .map(|&i| Ok(ScaWorkingSet::new(channel, precoders, &constraints[i], &beta)?.piece()))
                .collect::<Result<_, SicError>>()?;
            let delta = solve_maxmin_concave_quadratics(&pieces, &DVector::zeros(channel.n), opts.solver_tol)?;
            let cand: Vec<f64> = beta.iter().zip(delta.iter()).map(|(b, d)| b + d).collect();
            let cand_gaps = gaps_at(&cand)?;
            let new_gap = min_of(&cand_gaps);
            if new_gap >= gap {
                break Some((cand, cand_gaps, new_gap));
            }
            if size == order.len() {
                break None;
            }
            size = (2 * size).min(order.len());
        };
        let Some((cand, cand_gaps, new_gap)) = accepted else {
            break 'outer;
        };
        let improvement = new_gap - gap;
        beta = cand;
        gaps = cand_gaps;
        gap = new_gap;
        trace.push(gap);
        if improvement < opts.tol {
            break;
        }
    }
    Ok(ScaOutcome { theta: phases(&beta), beta, gap_trace: trace })
}
