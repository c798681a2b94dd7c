//! Single-group baselines: precoding only, with the RIS removed or at
//! random phases. Both decode all users in one group (`T_max = 1`).

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{MethodOutcome, Optimizer};
use crate::channel::{random_phases, EffectiveChannel};
use crate::sic::{alternate, fp_precode, sic_constraints, AoOptions, FpOptions, SicError};
use crate::state_evolution::Grouping;

/// Precoding with every RIS path removed. Fails with
/// [`SicError::Infeasible`] when some user has no direct path.
pub fn run_baseline_no_ris(
    channel: &EffectiveChannel,
    rho_tar: &[f64],
    opts: &AoOptions,
) -> Result<MethodOutcome, SicError> {
    let k = channel.k();
    let grouping = Grouping::single(k);
    let constraints = sic_constraints(&grouping, rho_tar)?;
    let out = alternate(&channel.without_ris(), &constraints, &[], opts)?;
    Ok(MethodOutcome {
        method: Optimizer::NoRis,
        power_trace: out.power_trace(),
        precoders: out.precoders,
        theta: vec![Complex64::new(0.0, 0.0); channel.n],
        grouping,
        reconstruction: false,
    })
}

/// Precoding at phases drawn from `seed` (the same draw that seeds the
/// groupwise optimizer).
pub fn run_baseline_random_phase(
    channel: &EffectiveChannel,
    rho_tar: &[f64],
    opts: &FpOptions,
    seed: u64,
) -> Result<MethodOutcome, SicError> {
    let k = channel.k();
    let grouping = Grouping::single(k);
    let constraints = sic_constraints(&grouping, rho_tar)?;
    let theta = random_phases(channel.n, &mut ChaCha20Rng::seed_from_u64(seed));
    let out = fp_precode(&channel.whitened(), &theta, &constraints, None, opts)?;
    Ok(MethodOutcome {
        method: Optimizer::RandomPhase,
        power_trace: out.power_trace,
        precoders: out.precoders,
        theta,
        grouping,
        reconstruction: false,
    })
}
