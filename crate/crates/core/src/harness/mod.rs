//! Scenario files, baseline optimizers and Monte Carlo experiment drivers.
//!
//! * [`config`]: versioned TOML scenarios and their hash.
//! * [`baselines`]: no-RIS and random-phase single-group precoding.
//! * [`diagonal`]: the diagonal variance-path optimizer.
//! * [`experiment`]: per-realization optimize/simulate loops, CSV and manifest output.

pub mod baselines;
pub mod config;
pub mod diagonal;
pub mod experiment;

use num_complex::Complex64;
use thiserror::Error;

use crate::channel::{ChannelError, EffectiveChannel};
use crate::coding::transfer::{default_table, TransferTable};
use crate::coding::CodingError;
use crate::info::InfoError;
use crate::sic::SicError;
use crate::state_evolution::{Grouping, SeError};
use crate::transceiver::{PrecoderSet, TransceiverError};

pub use baselines::{run_baseline_no_ris, run_baseline_random_phase};
pub use config::{Optimizer, ScenarioConfig};
pub use diagonal::{diagonal_constraints, run_diagonal_path, DIAGONAL_MARGIN, DIAGONAL_POINTS};
pub use experiment::{run_experiment, sweep, sweep_csv, Aggregate, ExperimentReport, Realization, Row};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error(transparent)]
    Sic(#[from] SicError),
    #[error(transparent)]
    Info(#[from] InfoError),
    #[error(transparent)]
    Se(#[from] SeError),
    #[error(transparent)]
    Transceiver(#[from] TransceiverError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Precoders and phases produced by one optimizer on one realization.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Optimizer,
    pub precoders: PrecoderSet,
    /// All zeros when the RIS is absent.
    pub theta: Vec<Complex64>,
    /// Average power after every accepted round.
    pub power_trace: Vec<f64>,
    /// Decoding order used by the design (a single group for baselines).
    pub grouping: Grouping,
    /// The method is a reconstruction of an under-specified procedure.
    pub reconstruction: bool,
}

impl MethodOutcome {
    pub fn power(&self) -> f64 {
        self.precoders.average_power()
    }

    pub fn power_dbm(&self) -> f64 {
        self.precoders.average_power_dbm()
    }
}

/// Transfer table of a scenario: the file it names, or the shipped table.
pub fn load_transfer(cfg: &ScenarioConfig) -> Result<TransferTable, HarnessError> {
    match &cfg.transfer_table {
        Some(path) => Ok(TransferTable::from_text(&std::fs::read_to_string(path)?)?),
        None => Ok(default_table().clone()),
    }
}

/// `(v_tar, ρ_tar)` of a scenario, identical for every user.
pub fn targets(cfg: &ScenarioConfig, table: &TransferTable) -> Result<(Vec<f64>, Vec<f64>), HarnessError> {
    let (v, rho) = table.target_to_sinr(cfg.p_tar)?;
    Ok((vec![v; cfg.k], vec![rho; cfg.k]))
}

/// Runs `method` on the design-subcarrier channel of one realization.
pub fn run_method(
    method: Optimizer,
    cfg: &ScenarioConfig,
    table: &TransferTable,
    channel: &EffectiveChannel,
    seed: u64,
) -> Result<MethodOutcome, HarnessError> {
    use crate::sic::{optimize, SicOptions};
    let (v_tar, rho_tar) = targets(cfg, table)?;
    let k = channel.k();
    let mut sic_opts = SicOptions::new(cfg.t_max);
    sic_opts.ao.max_rounds = cfg.ao_rounds;
    match method {
        Optimizer::Sic | Optimizer::SicRegroup => {
            sic_opts.regroup = method == Optimizer::SicRegroup;
            let r = optimize(channel, &rho_tar, &sic_opts, seed)?;
            Ok(MethodOutcome {
                method,
                power_trace: r.outcome.power_trace(),
                precoders: r.outcome.precoders,
                theta: r.outcome.theta,
                grouping: r.grouping,
                reconstruction: false,
            })
        }
        Optimizer::NoRis => Ok(run_baseline_no_ris(channel, &rho_tar, &sic_opts.ao)?),
        Optimizer::RandomPhase => Ok(run_baseline_random_phase(channel, &rho_tar, &sic_opts.ao.fp, seed)?),
        Optimizer::DiagonalPath => Ok(run_diagonal_path(channel, table, &v_tar, &sic_opts.ao, seed)?),
        Optimizer::Info => {
            use crate::info::{optimize_info, InfoOptions, RateSpec};
            let spec = RateSpec {
                q: cfg.q,
                rates: vec![crate::coding::default_code().rate(); k],
                l_cp: cfg.l_cp,
                j: cfg.j,
                j_prime: cfg.j_prime,
            };
            let opts = InfoOptions { max_rounds: cfg.ao_rounds, ..InfoOptions::default() };
            let r = optimize_info(channel, &spec, &opts, seed)?;
            Ok(MethodOutcome {
                method,
                power_trace: r.power_trace(),
                precoders: r.precoders,
                theta: r.theta,
                grouping: Grouping::single(k),
                reconstruction: false,
            })
        }
    }
}
