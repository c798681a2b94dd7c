//! Capacity-region power minimization (baseline).
//!
//! Every non-empty user subset `u` must satisfy
//! `Σ_j log2 det(I + Σ_{k ∈ u} a_k(j) a_k(j)^H) ≥ Σ_{k ∈ u} c R_k` on the
//! whitened channel, where `c = (J + L_cp) Q J'/J` counts bits on the `J'`
//! design subcarriers. Precoders are solved as per-subcarrier powers;
//! RIS elements are updated one at a time through a relaxed `|θ_n| ≤ 1`
//! problem followed by normalization.

use std::fmt::Write as _;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::channel::{random_phases, EffectiveChannel};
use crate::convex::linalg::{ln_det_hpd, outer, CMatrix, CVector};
use crate::convex::{
    solve_logdet_program, LogDetBlock, LogDetConstraint, LogDetProblem, QuadConstraint, QuadForm, Quadratic,
    Sense, SolverError,
};
use crate::transceiver::PrecoderSet;

#[derive(Debug, Error)]
pub enum InfoError {
    #[error("capacity constraints are unreachable (subset {subset:?})")]
    Infeasible { subset: Vec<usize> },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Largest user count accepted (the constraint count is `2^K - 1`).
pub const MAX_USERS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct RateSpec {
    /// Bits per symbol.
    pub q: usize,
    /// Code rate of each user.
    pub rates: Vec<f64>,
    pub l_cp: usize,
    /// Subcarriers per OFDM block.
    pub j: usize,
    /// Design subcarriers.
    pub j_prime: usize,
}

impl RateSpec {
    /// Bits per unit code rate on the design subcarriers: `(J + L_cp) Q J'/J`.
    pub fn bits_per_rate(&self) -> f64 {
        (self.j + self.l_cp) as f64 * self.q as f64 * self.j_prime as f64 / self.j as f64
    }

    /// Rate floor of `subset`.
    pub fn floor(&self, subset: &[usize]) -> f64 {
        subset.iter().map(|&k| self.rates[k]).sum::<f64>() * self.bits_per_rate()
    }

    fn validate(&self, k: usize, jp: usize) -> Result<(), InfoError> {
        if self.rates.len() != k || self.rates.iter().any(|r| !(*r > 0.0)) {
            return Err(InfoError::InvalidRequest("one positive rate per user".into()));
        }
        if self.j_prime != jp || self.j == 0 || self.q == 0 {
            return Err(InfoError::InvalidRequest("rate bookkeeping does not match the channel".into()));
        }
        if k == 0 || k > MAX_USERS {
            return Err(InfoError::InvalidRequest(format!("between 1 and {MAX_USERS} users")));
        }
        Ok(())
    }
}

/// All non-empty subsets of `0..k` in increasing bitmask order.
pub fn subsets(k: usize) -> Vec<Vec<usize>> {
    (1u32..(1 << k)).map(|mask| (0..k).filter(|&u| mask & (1 << u) != 0).collect()).collect()
}

fn capacity_whitened(g: &[Vec<CVector>], precoders: &PrecoderSet, subset: &[usize]) -> f64 {
    let m = g[0][0].len();
    (0..g[0].len())
        .map(|j| {
            let mut a = CMatrix::identity(m, m);
            for &k in subset {
                a += outer(&g[k][j]) * Complex64::new(precoders.w[k][j].norm_sqr(), 0.0);
            }
            ln_det_hpd(&a).expect("identity plus PSD is PD") / std::f64::consts::LN_2
        })
        .sum()
}

/// `Σ_j log2 det(I + (1/σ²) Σ_{k ∈ subset} a a^H)` minus the subset's floor.
pub fn capacity_slack(
    channel: &EffectiveChannel,
    theta: &[Complex64],
    precoders: &PrecoderSet,
    spec: &RateSpec,
    subset: &[usize],
) -> f64 {
    let g = channel.whitened().compose(theta);
    capacity_whitened(&g, precoders, subset) - spec.floor(subset)
}

/// Smallest slack over all subsets.
pub fn min_capacity_slack(
    channel: &EffectiveChannel,
    theta: &[Complex64],
    precoders: &PrecoderSet,
    spec: &RateSpec,
) -> f64 {
    let g = channel.whitened().compose(theta);
    subsets(channel.k())
        .iter()
        .map(|u| capacity_whitened(&g, precoders, u) - spec.floor(u))
        .fold(f64::INFINITY, f64::min)
}

/// Minimum-power precoders meeting every capacity constraint at `theta`.
/// Precoder phases are irrelevant and returned real.
pub fn solve_w_info(
    channel: &EffectiveChannel,
    theta: &[Complex64],
    spec: &RateSpec,
    tol: f64,
) -> Result<PrecoderSet, InfoError> {
    let k = channel.k();
    let jp = channel.subcarriers();
    spec.validate(k, jp)?;
    let g = channel.whitened().compose(theta);
    let m = channel.m;
    let nv = k * jp;
    // A uniform allocation that meets every constraint fixes the variable scale.
    let mut p0 = 1e-12;
    let all: Vec<Vec<usize>> = subsets(k);
    let feasible_at = |p: f64| {
        let w = PrecoderSet::uniform(k, jp, p.sqrt());
        all.iter().all(|u| capacity_whitened(&g, &w, u) > spec.floor(u))
    };
    let mut found = false;
    for _ in 0..400 {
        if feasible_at(p0) {
            found = true;
            break;
        }
        p0 *= 2.0;
    }
    if !found {
        let w = PrecoderSet::uniform(k, jp, p0.sqrt());
        let worst = all
            .iter()
            .min_by(|a, b| {
                (capacity_whitened(&g, &w, a) - spec.floor(a)).total_cmp(&(capacity_whitened(&g, &w, b) - spec.floor(b)))
            })
            .cloned()
            .unwrap_or_default();
        return Err(InfoError::Infeasible { subset: worst });
    }
    let scale = p0;
    let logdet_constraints: Vec<LogDetConstraint> = all
        .iter()
        .map(|u| LogDetConstraint {
            blocks: (0..jp)
                .map(|j| LogDetBlock {
                    base: CMatrix::identity(m, m),
                    terms: u.iter().map(|&kk| (kk * jp + j, outer(&g[kk][j]) * Complex64::new(scale, 0.0))).collect(),
                })
                .collect(),
            lin: DVector::zeros(nv),
            rhs: spec.floor(u),
        })
        .collect();
    let quad_constraints: Vec<QuadConstraint> = (0..nv)
        .map(|i| {
            let mut lin = DVector::zeros(nv);
            lin[i] = 1.0;
            QuadConstraint { quad: QuadForm::Zero, lin, constant: 0.0, sense: Sense::AtLeast }
        })
        .collect();
    let problem = LogDetProblem {
        objective: Quadratic::linear(DVector::from_element(nv, 1.0), 0.0),
        quad_constraints,
        logdet_constraints,
        start: Some(DVector::from_element(nv, 1.0)),
    };
    let sol = solve_logdet_program(&problem, tol * nv as f64)?;
    Ok(PrecoderSet {
        w: (0..k)
            .map(|kk| (0..jp).map(|j| Complex64::new((sol.x[kk * jp + j].max(0.0) * scale).sqrt(), 0.0)).collect())
            .collect(),
    })
}

/// Relaxed single-element problem data: for subset `u`, block `j`, the
/// log-det argument is `base + Re θ_n · S_re + Im θ_n · S_im` with the
/// `|θ_n|²` term fixed at one.
fn element_constraints(
    channel: &EffectiveChannel,
    theta: &[Complex64],
    precoders: &PrecoderSet,
    spec: &RateSpec,
    n: usize,
) -> Vec<(Vec<usize>, LogDetConstraint)> {
    let wch = channel.whitened();
    let k = wch.k();
    let jp = wch.subcarriers();
    let m = wch.m;
    let mut others = theta.to_vec();
    others[n] = Complex64::new(0.0, 0.0);
    let b = wch.compose(&others);
    let c = spec.bits_per_rate();
    subsets(k)
        .into_iter()
        .map(|u| {
            let blocks = (0..jp)
                .map(|j| {
                    let mut base = CMatrix::identity(m, m);
                    let mut e_mat = CMatrix::zeros(m, m);
                    for &kk in &u {
                        let w = precoders.w[kk][j];
                        let bk = &b[kk][j] * w;
                        let ek = wch.cascade[kk][j].column(n) * w;
                        base += outer(&bk) + outer(&ek);
                        e_mat += &ek * bk.adjoint();
                    }
                    let s_re = &e_mat + e_mat.adjoint();
                    let s_im = (&e_mat - e_mat.adjoint()) * Complex64::i();
                    LogDetBlock { base, terms: vec![(0, s_re), (1, s_im)] }
                })
                .collect();
            let mut lin = DVector::zeros(3);
            lin[2] = c * u.len() as f64;
            let rhs = spec.floor(&u);
            (u, LogDetConstraint { blocks, lin, rhs })
        })
        .collect()
}

/// Largest common rate margin `ΔR` available at relaxed element value `t`
/// (with the `|θ_n|²` term fixed at one), for fixed other elements.
pub fn element_margin(
    channel: &EffectiveChannel,
    theta: &[Complex64],
    precoders: &PrecoderSet,
    spec: &RateSpec,
    n: usize,
    t: Complex64,
) -> f64 {
    let x = DVector::from_vec(vec![t.re, t.im, 0.0]);
    element_constraints(channel, theta, precoders, spec, n)
        .iter()
        .map(|(_, c)| c.slack(&x).map_or(f64::NEG_INFINITY, |s| s / c.lin[2]))
        .fold(f64::INFINITY, f64::min)
}

/// Solves `max ΔR` over `(Re θ_n, Im θ_n, ΔR)` with `|θ_n| ≤ 1`. Returns the
/// relaxed `θ_n` and the margin.
pub fn solve_theta_info(
    channel: &EffectiveChannel,
    theta: &[Complex64],
    precoders: &PrecoderSet,
    spec: &RateSpec,
    n: usize,
    tol: f64,
) -> Result<(Complex64, f64), InfoError> {
    if n >= channel.n {
        return Err(InfoError::InvalidRequest(format!("element {n} of {}", channel.n)));
    }
    spec.validate(channel.k(), channel.subcarriers())?;
    let cons: Vec<LogDetConstraint> =
        element_constraints(channel, theta, precoders, spec, n).into_iter().map(|(_, c)| c).collect();
    let start_t = theta[n] * 0.5;
    let x_start = DVector::from_vec(vec![start_t.re, start_t.im, 0.0]);
    let margin0 = cons
        .iter()
        .map(|c| c.slack(&x_start).map_or(f64::NEG_INFINITY, |s| s / c.lin[2]))
        .fold(f64::INFINITY, f64::min);
    let start = DVector::from_vec(vec![start_t.re, start_t.im, margin0 - 1.0]);
    let mut objective_lin = DVector::zeros(3);
    objective_lin[2] = -1.0;
    let disk = QuadConstraint {
        quad: QuadForm::Diagonal(DVector::from_vec(vec![2.0, 2.0, 0.0])),
        lin: DVector::zeros(3),
        constant: -1.0,
        sense: Sense::AtMost,
    };
    let problem = LogDetProblem {
        objective: Quadratic::linear(objective_lin, 0.0),
        quad_constraints: vec![disk],
        logdet_constraints: cons,
        start: Some(start),
    };
    let sol = solve_logdet_program(&problem, tol)?;
    Ok((Complex64::new(sol.x[0], sol.x[1]), sol.x[2]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoOptions {
    pub max_rounds: usize,
    pub tol: f64,
    pub solver_tol: f64,
    /// Normalize a relaxed `θ_n` only when the normalized point keeps every
    /// capacity constraint satisfied with the current precoders.
    pub guarded_normalization: bool,
}

impl Default for InfoOptions {
    fn default() -> Self {
        InfoOptions { max_rounds: 30, tol: 1e-3, solver_tol: 1e-9, guarded_normalization: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoRound {
    pub round: usize,
    pub power: f64,
    /// The round raised power (the alternation carries no descent guarantee).
    pub increased: bool,
}

#[derive(Debug, Clone)]
pub struct InfoResult {
    pub precoders: PrecoderSet,
    pub theta: Vec<Complex64>,
    pub rounds: Vec<InfoRound>,
}

impl InfoResult {
    pub fn power_trace(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.power).collect()
    }

    /// CSV with columns `round, power, increased`.
    pub fn rounds_csv(&self) -> String {
        let mut s = String::from("round,power,increased\n");
        for r in &self.rounds {
            writeln!(s, "{},{:.12e},{}", r.round, r.power, u8::from(r.increased)).ok();
        }
        s
    }
}

/// Alternates the precoder solve with a sweep over RIS elements, from
/// seeded random phases.
pub fn optimize_info(
    channel: &EffectiveChannel,
    spec: &RateSpec,
    opts: &InfoOptions,
    seed: u64,
) -> Result<InfoResult, InfoError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let theta0 = random_phases(channel.n, &mut rng);
    optimize_info_from(channel, spec, opts, &theta0)
}

pub fn optimize_info_from(
    channel: &EffectiveChannel,
    spec: &RateSpec,
    opts: &InfoOptions,
    theta0: &[Complex64],
) -> Result<InfoResult, InfoError> {
    let mut theta = theta0.to_vec();
    let mut w = solve_w_info(channel, &theta, spec, opts.solver_tol)?;
    let mut power = w.average_power();
    let mut rounds = vec![InfoRound { round: 0, power, increased: false }];
    let mut best = (w.clone(), theta.clone(), power);
    if channel.n == 0 {
        return Ok(InfoResult { precoders: w, theta, rounds });
    }
    for round in 1..=opts.max_rounds {
        for n in 0..channel.n {
            let (t, _) = match solve_theta_info(channel, &theta, &w, spec, n, opts.solver_tol) {
                Ok(r) => r,
                Err(InfoError::Solver(_)) => continue,
                Err(e) => return Err(e),
            };
            let mag = t.norm();
            let previous = theta[n];
            theta[n] = t;
            if mag > 1e-12 && mag < 1.0 {
                let normalized = t / mag;
                if opts.guarded_normalization {
                    let mut trial = theta.clone();
                    trial[n] = normalized;
                    if min_capacity_slack(channel, &trial, &w, spec) >= 0.0 {
                        theta[n] = normalized;
                    }
                } else {
                    theta[n] = normalized;
                }
            } else if mag <= 1e-12 {
                theta[n] = previous;
            }
        }
        let next = match solve_w_info(channel, &theta, spec, opts.solver_tol) {
            Ok(x) => x,
            Err(InfoError::Infeasible { .. }) | Err(InfoError::Solver(_)) => break,
            Err(e) => return Err(e),
        };
        let new_power = next.average_power();
        let increased = new_power > power;
        rounds.push(InfoRound { round, power: new_power, increased });
        if increased {
            break;
        }
        let rel = (power - new_power) / power;
        w = next;
        power = new_power;
        best = (w.clone(), theta.clone(), power);
        if rel < opts.tol {
            break;
        }
    }
    Ok(InfoResult { precoders: best.0, theta: best.1, rounds })
}
