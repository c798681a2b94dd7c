//! Diagonal variance path.
//!
//! All users move together along `v_1 = … = v_K = v`, with `v` on a
//! geometric grid from 1 to `min_k v_tar,k`. At every grid point each user
//! must satisfy `φ_k(v·1) ≥ ψ^{-1}(v) + ε`; there is no bound on the number
//! of receiver iterations. The constraint set is then handled by the same
//! alternating FP/SCA machinery as the groupwise design.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{HarnessError, MethodOutcome, Optimizer};
use crate::channel::{random_phases, EffectiveChannel};
use crate::coding::transfer::DecTransfer;
use crate::sic::{alternate, AoOptions, SinrConstraint};
use crate::state_evolution::{Grouping, PathSpec};

/// Grid points on the diagonal, including `v = 1`.
pub const DIAGONAL_POINTS: usize = 64;

/// Margin `ε` added to every required SINR.
pub const DIAGONAL_MARGIN: f64 = 1e-6;

/// `points · K` constraints, ordered by grid point then user.
pub fn diagonal_constraints(
    transfer: &dyn DecTransfer,
    v_tar: &[f64],
    points: usize,
    margin: f64,
) -> Result<Vec<SinrConstraint>, HarnessError> {
    let k = v_tar.len();
    let v_end = v_tar.iter().cloned().fold(f64::INFINITY, f64::min);
    let path = PathSpec::diagonal(&[v_end], points);
    let mut out = Vec::with_capacity(path.points.len() * k);
    for p in &path.points {
        let v = p[0];
        let target = transfer.psi_inv(v)? + margin;
        for user in 0..k {
            out.push(SinrConstraint { user, weights: vec![v; k], target });
        }
    }
    Ok(out)
}

/// Diagonal-path design from phases drawn from `seed`.
pub fn run_diagonal_path(
    channel: &EffectiveChannel,
    transfer: &dyn DecTransfer,
    v_tar: &[f64],
    opts: &AoOptions,
    seed: u64,
) -> Result<MethodOutcome, HarnessError> {
    let constraints = diagonal_constraints(transfer, v_tar, DIAGONAL_POINTS, DIAGONAL_MARGIN)?;
    let theta0 = random_phases(channel.n, &mut ChaCha20Rng::seed_from_u64(seed));
    let out = alternate(channel, &constraints, &theta0, opts)?;
    Ok(MethodOutcome {
        method: Optimizer::DiagonalPath,
        power_trace: out.power_trace(),
        precoders: out.precoders,
        theta: out.theta,
        grouping: Grouping::single(channel.k()),
        reconstruction: true,
    })
}
