//! Deterministic performance recursion of the iterative receiver.
//!
//! The estimator maps feedback variances to extrinsic SINRs,
//! `ρ_k = φ_k(v) = τ_k/(1 - v_k τ_k)`, and the decoder maps SINRs back to
//! variances through its transfer table, `v_k = ψ(ρ_k)`. A power allocation
//! supports a variance path from `(1, …, 1)` to the targets when
//! `φ_k(v) > ψ^{-1}(v_k)` holds at every point of the path.

use std::fmt::Write as _;

use thiserror::Error;

use crate::coding::transfer::DecTransfer;
use crate::convex::linalg::CVector;
use crate::transceiver::{extrinsic_sinr, lmmse_tau, TransceiverError};

#[derive(Debug, Error)]
pub enum SeError {
    #[error(transparent)]
    Transceiver(#[from] TransceiverError),
    #[error("invalid grouping: {0}")]
    InvalidGrouping(String),
    #[error("invalid variance vector: {0}")]
    InvalidVariance(String),
}

/// Margin of the strict path inequality.
pub const PATH_MARGIN: f64 = 1e-9;

/// Default number of points per path segment.
pub const PATH_POINTS: usize = 64;

/// Ordered partition of users into decoding groups. Empty groups are
/// allowed and simply skip a receiver iteration.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Grouping {
    pub groups: Vec<Vec<usize>>,
}

impl Grouping {
    pub fn new(groups: Vec<Vec<usize>>, k: usize) -> Result<Self, SeError> {
        let mut seen = vec![false; k];
        for &u in groups.iter().flatten() {
            if u >= k || seen[u] {
                return Err(SeError::InvalidGrouping(format!("user {u} is out of range or repeated")));
            }
            seen[u] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(SeError::InvalidGrouping("every user must appear in a group".into()));
        }
        Ok(Grouping { groups })
    }

    /// Everyone in one group (no cancellation).
    pub fn single(k: usize) -> Self {
        Grouping { groups: vec![(0..k).collect()] }
    }

    pub fn users(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn group_of(&self, user: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&user))
    }

    /// Interference weights seen by `user`: 1 for its own and later groups,
    /// 0 for groups already cancelled.
    pub fn sic_weights(&self, user: usize) -> Result<Vec<f64>, SeError> {
        let t = self
            .group_of(user)
            .ok_or_else(|| SeError::InvalidGrouping(format!("user {user} is in no group")))?;
        let mut w = vec![0.0; self.users()];
        for g in &self.groups[t..] {
            for &u in g {
                w[u] = 1.0;
            }
        }
        Ok(w)
    }
}

fn check_v(v: &[f64], k: usize) -> Result<(), SeError> {
    if v.len() != k {
        return Err(SeError::InvalidVariance(format!("{} entries for {k} users", v.len())));
    }
    if v.iter().any(|x| !(*x >= 0.0 && *x <= 1.0)) {
        return Err(SeError::InvalidVariance("entries must lie in [0, 1]".into()));
    }
    Ok(())
}

/// `φ(v)` for every user.
pub fn phi(columns: &[Vec<CVector>], noise_var: f64, v: &[f64]) -> Result<Vec<f64>, SeError> {
    check_v(v, columns.len())?;
    let tau = lmmse_tau(columns, noise_var, v)?;
    Ok(tau.iter().zip(v).map(|(&t, &vk)| extrinsic_sinr(t, vk)).collect())
}

/// Extrinsic SINR of `user` when the other users interfere with variances
/// `weights` and the user's own prior variance is `weights[user]`.
pub fn weighted_sinr(columns: &[Vec<CVector>], noise_var: f64, user: usize, weights: &[f64]) -> Result<f64, SeError> {
    check_v(weights, columns.len())?;
    let tau = lmmse_tau(columns, noise_var, weights)?;
    Ok(extrinsic_sinr(tau[user], weights[user]))
}

/// SINR of `user` after earlier groups are cancelled, with unit variance for
/// every user not yet decoded.
pub fn phi_prime(user: usize, grouping: &Grouping, columns: &[Vec<CVector>], noise_var: f64) -> Result<f64, SeError> {
    if grouping.users() != columns.len() {
        return Err(SeError::InvalidGrouping(format!(
            "grouping covers {} users, channel has {}",
            grouping.users(),
            columns.len()
        )));
    }
    weighted_sinr(columns, noise_var, user, &grouping.sic_weights(user)?)
}

/// Trajectory of the recursion; `v[0]` is the initial point and
/// `rho[t]` produced `v[t + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeTrace {
    pub v: Vec<Vec<f64>>,
    pub rho: Vec<Vec<f64>>,
}

impl SeTrace {
    pub fn final_v(&self) -> &[f64] {
        self.v.last().expect("trace holds the initial point")
    }

    /// CSV with columns `t, v_1..v_K, rho_1..rho_K` (rho empty at `t = 0`).
    pub fn to_csv(&self) -> String {
        let k = self.v[0].len();
        let mut s = String::from("t");
        for i in 1..=k {
            write!(s, ",v{i}").ok();
        }
        for i in 1..=k {
            write!(s, ",rho{i}").ok();
        }
        s.push('\n');
        for (t, v) in self.v.iter().enumerate() {
            write!(s, "{t}").ok();
            for x in v {
                write!(s, ",{x:.9e}").ok();
            }
            for i in 0..k {
                match t.checked_sub(1).and_then(|p| self.rho.get(p)) {
                    Some(r) => write!(s, ",{:.9e}", r[i]).ok(),
                    None => write!(s, ",").ok(),
                };
            }
            s.push('\n');
        }
        s
    }
}

/// Runs `ρ = φ(v)`, `v = ψ(ρ)` for `t_max` steps. With `cancel_below`, a user
/// whose variance reaches its target is treated as perfectly cancelled
/// (variance 0) from then on.
pub fn se_run(
    v0: &[f64],
    t_max: usize,
    transfer: &dyn DecTransfer,
    columns: &[Vec<CVector>],
    noise_var: f64,
    cancel_below: Option<&[f64]>,
) -> Result<SeTrace, SeError> {
    check_v(v0, columns.len())?;
    if let Some(t) = cancel_below {
        check_v(t, columns.len())?;
    }
    let mut v = v0.to_vec();
    let mut frozen = vec![false; v.len()];
    let mut trace = SeTrace { v: vec![v.clone()], rho: Vec::new() };
    for _ in 0..t_max {
        let rho = phi(columns, noise_var, &v)?;
        for k in 0..v.len() {
            if frozen[k] {
                continue;
            }
            v[k] = transfer.psi(rho[k]);
            if let Some(tar) = cancel_below {
                if v[k] <= tar[k] {
                    frozen[k] = true;
                    v[k] = 0.0;
                }
            }
        }
        trace.rho.push(rho);
        trace.v.push(v.clone());
    }
    Ok(trace)
}

/// Monotone variance path from `(1, …, 1)` to the targets.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    pub points: Vec<Vec<f64>>,
}

/// Geometric interpolation from 1 to `target`, excluding 1, including `target`.
fn geometric(target: f64, n: usize) -> impl Iterator<Item = f64> {
    let lt = target.max(1e-300).ln();
    (1..=n).map(move |i| if i == n { target } else { (lt * i as f64 / n as f64).exp() })
}

impl PathSpec {
    /// `n ≥ 2` points moving all users together, `v_k(s) = v_tar,k^s` for
    /// `s = 0, 1/(n-1), …, 1`.
    pub fn diagonal(v_tar: &[f64], n: usize) -> Self {
        let n = n.max(2);
        let mut points = vec![vec![1.0; v_tar.len()]];
        let steps: Vec<Vec<f64>> = v_tar.iter().map(|&t| geometric(t, n - 1).collect()).collect();
        for i in 0..n - 1 {
            points.push(steps.iter().map(|s| s[i]).collect());
        }
        PathSpec { points }
    }

    /// Groups reach their targets one after another.
    pub fn staircase(grouping: &Grouping, v_tar: &[f64], n: usize) -> Self {
        let mut cur = vec![1.0; v_tar.len()];
        let mut points = vec![cur.clone()];
        for g in &grouping.groups {
            let steps: Vec<Vec<f64>> = g.iter().map(|&u| geometric(v_tar[u], n).collect()).collect();
            for i in 0..n {
                for (s, &u) in steps.iter().zip(g) {
                    cur[u] = s[i];
                }
                points.push(cur.clone());
            }
        }
        PathSpec { points }
    }

    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| b <= a))
    }
}

/// First point where the path condition fails.
#[derive(Debug, Clone, PartialEq)]
pub struct PathViolation {
    pub point: usize,
    pub user: usize,
    pub phi: f64,
    /// Required SINR; infinite when the variance is below the table range.
    pub required: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathCheck {
    pub feasible: bool,
    pub endpoint_ok: bool,
    pub witness: Option<PathViolation>,
}

/// Checks `φ_k(v) > ψ^{-1}(v_k) + ε` along the path and `v_k ≤ v_tar,k` at its end.
pub fn path_feasible(
    path: &PathSpec,
    transfer: &dyn DecTransfer,
    columns: &[Vec<CVector>],
    noise_var: f64,
    v_tar: &[f64],
) -> Result<PathCheck, SeError> {
    let last = path.points.last().ok_or_else(|| SeError::InvalidVariance("empty path".into()))?;
    check_v(v_tar, columns.len())?;
    let endpoint_ok = last.iter().zip(v_tar).all(|(v, t)| v <= t);
    for (p, v) in path.points.iter().enumerate() {
        let rho = phi(columns, noise_var, v)?;
        for (k, (&r, &vk)) in rho.iter().zip(v).enumerate() {
            let required = transfer.psi_inv(vk).unwrap_or(f64::INFINITY);
            if !(r > required + PATH_MARGIN) {
                return Ok(PathCheck {
                    feasible: false,
                    endpoint_ok,
                    witness: Some(PathViolation { point: p, user: k, phi: r, required }),
                });
            }
        }
    }
    Ok(PathCheck { feasible: endpoint_ok, endpoint_ok, witness: None })
}
