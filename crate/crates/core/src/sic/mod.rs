//! Groupwise SIC power minimization.
//!
//! Users are split into decoding groups; group `t` is decoded at receiver
//! iteration `t` with every earlier group cancelled. Each user must then
//! reach its target SINR in one shot, which turns the path condition into
//! one SINR constraint per user. Precoders are optimized by fractional
//! programming ([`fp`]) and RIS phases by successive convex approximation
//! ([`sca`]), alternately.
//!
//! All optimizers work on the whitened channel (unit noise power), so the
//! precoders keep physical units.

pub mod fp;
pub mod grouping;
pub mod sca;

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::channel::{random_phases, EffectiveChannel};
use crate::convex::linalg::{hermitian_cholesky, CMatrix, CVector};
use crate::convex::SolverError;
use crate::state_evolution::{Grouping, SeError};
use crate::transceiver::{extrinsic_sinr, PrecoderSet, TransceiverError};

pub use fp::{fp_precode, FpOptions, FpOutcome};
pub use grouping::{exhaustive_grouping, group_users, sum_rate};
pub use sca::{sca_beamform, ScaOptions, ScaOutcome, ScaWorkingSet};

#[derive(Debug, Error)]
pub enum SicError {
    #[error("targets are unreachable; binding constraint {constraint} (user {user})")]
    Infeasible { constraint: usize, user: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Se(#[from] SeError),
    #[error(transparent)]
    Transceiver(#[from] TransceiverError),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// `ρ_user(W, θ) ≥ target`, where the estimator sees every user `k'` with
/// prior variance `weights[k']` (0 for cancelled users) and the user's own
/// prior variance is `weights[user]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrConstraint {
    pub user: usize,
    pub weights: Vec<f64>,
    pub target: f64,
}

impl SinrConstraint {
    /// Equivalent lower bound on `τ`: `target / (1 + weights[user] · target)`.
    pub fn tau_threshold(&self) -> f64 {
        self.target / (1.0 + self.weights[self.user] * self.target)
    }

    pub fn sinr(&self, tau: f64) -> f64 {
        extrinsic_sinr(tau, self.weights[self.user])
    }
}

/// One constraint per user: unit variance for users in the same or later
/// groups, zero for earlier groups.
pub fn sic_constraints(grouping: &Grouping, rho_tar: &[f64]) -> Result<Vec<SinrConstraint>, SicError> {
    if grouping.users() != rho_tar.len() {
        return Err(SicError::InvalidRequest(format!(
            "{} targets for {} grouped users",
            rho_tar.len(),
            grouping.users()
        )));
    }
    (0..rho_tar.len())
        .map(|k| Ok(SinrConstraint { user: k, weights: grouping.sic_weights(k)?, target: rho_tar[k] }))
        .collect()
}

/// `a[k][j] = g_k(j; θ) w_k(j)` on the design subcarriers.
pub(crate) fn columns_of(g: &[Vec<CVector>], precoders: &PrecoderSet) -> Vec<Vec<CVector>> {
    g.iter()
        .zip(&precoders.w)
        .map(|(gk, wk)| gk.iter().zip(wk).map(|(v, s)| v * *s).collect())
        .collect()
}

/// `B(j) = Σ_k' weights[k'] a_k'(j) a_k'(j)^H + I`.
pub(crate) fn weighted_b(columns: &[Vec<CVector>], weights: &[f64], j: usize) -> CMatrix {
    let m = columns[0][j].len();
    let mut b = CMatrix::identity(m, m);
    for (ck, &w) in columns.iter().zip(weights) {
        if w != 0.0 {
            b += &ck[j] * ck[j].adjoint() * Complex64::new(w, 0.0);
        }
    }
    b
}

/// `y(j) = B(j)^{-1} a_user(j)` and `τ = (1/J') Σ_j a^H B^{-1} a`.
pub(crate) fn fp_auxiliary(columns: &[Vec<CVector>], c: &SinrConstraint) -> Result<(Vec<CVector>, f64), SicError> {
    let jp = columns[0].len();
    let mut ys = Vec::with_capacity(jp);
    let mut tau = 0.0;
    for j in 0..jp {
        let b = weighted_b(columns, &c.weights, j);
        let chol = hermitian_cholesky(&b)?;
        let a = &columns[c.user][j];
        let y = CVector::from_column_slice(chol.solve(&CMatrix::from_column_slice(a.len(), 1, a.as_slice())).as_slice());
        tau += a.dotc(&y).re / jp as f64;
        ys.push(y);
    }
    Ok((ys, tau))
}

/// `τ` of every constraint.
pub fn constraint_taus(columns: &[Vec<CVector>], constraints: &[SinrConstraint]) -> Result<Vec<f64>, SicError> {
    constraints.iter().map(|c| Ok(fp_auxiliary(columns, c)?.1)).collect()
}

/// `min_c (ρ_c - target_c)` and the index attaining it.
pub fn min_gap(columns: &[Vec<CVector>], constraints: &[SinrConstraint]) -> Result<(f64, usize), SicError> {
    let taus = constraint_taus(columns, constraints)?;
    Ok(taus
        .iter()
        .zip(constraints)
        .map(|(&t, c)| c.sinr(t) - c.target)
        .enumerate()
        .fold((f64::INFINITY, 0), |acc, (i, g)| if g < acc.0 { (g, i) } else { acc }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoOptions {
    pub max_rounds: usize,
    /// Stop when the relative power change of a round falls below this.
    pub tol: f64,
    pub fp: FpOptions,
    pub sca: ScaOptions,
}

impl Default for AoOptions {
    fn default() -> Self {
        AoOptions { max_rounds: 30, tol: 1e-3, fp: FpOptions::default(), sca: ScaOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SicOptions {
    pub t_max: usize,
    pub ao: AoOptions,
    /// Re-run the grouping with the current phases after every round.
    pub regroup: bool,
}

impl SicOptions {
    pub fn new(t_max: usize) -> Self {
        SicOptions { t_max, ao: AoOptions::default(), regroup: false }
    }
}

/// Diagnostics of one alternating round.
#[derive(Debug, Clone, PartialEq)]
pub struct AoRound {
    pub round: usize,
    /// Average power per user and subcarrier (W).
    pub power: f64,
    pub min_gap: f64,
}

#[derive(Debug, Clone)]
pub struct AoOutcome {
    pub precoders: PrecoderSet,
    pub theta: Vec<Complex64>,
    pub rounds: Vec<AoRound>,
}

impl AoOutcome {
    pub fn power_trace(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.power).collect()
    }

    /// CSV with columns `round, power, min_gap`.
    pub fn rounds_csv(&self) -> String {
        let mut s = String::from("round,power,min_gap\n");
        for r in &self.rounds {
            writeln!(s, "{},{:.12e},{:.6e}", r.round, r.power, r.min_gap).ok();
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct SicResult {
    pub outcome: AoOutcome,
    pub grouping: Grouping,
}

/// Alternates precoding and phase updates for a fixed constraint set,
/// starting from phases `theta0`. Round 0 records the initial precoding.
pub fn alternate(
    channel: &EffectiveChannel,
    constraints: &[SinrConstraint],
    theta0: &[Complex64],
    opts: &AoOptions,
) -> Result<AoOutcome, SicError> {
    let wch = channel.whitened();
    let mut theta = theta0.to_vec();
    let first = fp_precode(&wch, &theta, constraints, None, &opts.fp)?;
    let mut w = first.precoders;
    let mut power = w.average_power();
    let cols = columns_of(&wch.compose(&theta), &w);
    let mut rounds = vec![AoRound { round: 0, power, min_gap: min_gap(&cols, constraints)?.0 }];
    if wch.n == 0 {
        return Ok(AoOutcome { precoders: w, theta, rounds });
    }
    for round in 1..=opts.max_rounds {
        let sca = sca_beamform(&wch, &w, constraints, &theta, &opts.sca)?;
        let fp = match fp_precode(&wch, &sca.theta, constraints, Some(&w), &opts.fp) {
            Ok(f) => f,
            Err(SicError::Solver(_)) | Err(SicError::Infeasible { .. }) => break,
            Err(e) => return Err(e),
        };
        let new_power = fp.precoders.average_power();
        if new_power > power {
            break;
        }
        let rel = (power - new_power) / power;
        theta = sca.theta;
        w = fp.precoders;
        power = new_power;
        let cols = columns_of(&wch.compose(&theta), &w);
        rounds.push(AoRound { round, power, min_gap: min_gap(&cols, constraints)?.0 });
        if rel < opts.tol {
            break;
        }
    }
    Ok(AoOutcome { precoders: w, theta, rounds })
}

/// Full groupwise SIC optimization: random initial phases, grouping at
/// uniform unit power, then alternating optimization.
pub fn optimize(
    channel: &EffectiveChannel,
    rho_tar: &[f64],
    opts: &SicOptions,
    seed: u64,
) -> Result<SicResult, SicError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let theta0 = random_phases(channel.n, &mut rng);
    optimize_from(channel, rho_tar, opts, &theta0)
}

/// [`optimize`] from given initial phases.
pub fn optimize_from(
    channel: &EffectiveChannel,
    rho_tar: &[f64],
    opts: &SicOptions,
    theta0: &[Complex64],
) -> Result<SicResult, SicError> {
    if opts.t_max == 0 {
        return Err(SicError::InvalidRequest("T_max must be at least 1".into()));
    }
    let k = channel.k();
    let uniform = PrecoderSet::uniform(k, channel.subcarriers(), 1.0);
    let grouping = group_users(channel, theta0, &uniform, opts.t_max)?;
    let constraints = sic_constraints(&grouping, rho_tar)?;
    if !opts.regroup {
        let outcome = alternate(channel, &constraints, theta0, &opts.ao)?;
        return Ok(SicResult { outcome, grouping });
    }
    // Regrouping variant: one alternating round per grouping update.
    let single = AoOptions { max_rounds: 1, ..opts.ao.clone() };
    let mut grouping = grouping;
    let mut out = alternate(channel, &constraints, theta0, &single)?;
    let mut rounds = out.rounds.clone();
    for round in 2..=opts.ao.max_rounds {
        let g = group_users(channel, &out.theta, &uniform, opts.t_max)?;
        let cons = sic_constraints(&g, rho_tar)?;
        let next = alternate(channel, &cons, &out.theta, &single)?;
        let p = next.precoders.average_power();
        let prev = out.precoders.average_power();
        rounds.push(AoRound { round, power: p, min_gap: next.rounds.last().map_or(0.0, |r| r.min_gap) });
        grouping = g;
        out = next;
        if ((prev - p) / prev).abs() < opts.ao.tol {
            break;
        }
    }
    out.rounds = rounds;
    Ok(SicResult { outcome: out, grouping })
}
