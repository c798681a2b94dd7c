//! Per-realization experiments.
//!
//! Each realization draws a geometry and channel from its seed, runs the
//! selected optimizer on the design subcarriers, predicts the BER by state
//! evolution and measures it by Monte Carlo on all `J` subcarriers.
//! Failures are recorded per seed without stopping the run.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{load_transfer, run_method, HarnessError, MethodOutcome, Optimizer, ScenarioConfig};
use crate::channel::{assemble_effective, generate_channels, watts_to_dbm, EffectiveChannel, Geometry};
use crate::coding::default_code;
use crate::coding::transfer::TransferTable;
use crate::state_evolution::se_run;
use crate::transceiver::{effective_columns, simulate, user_codecs, SimOptions};

/// Mixed into the seed for the user drop.
const GEOMETRY_SALT: u64 = 0x6765_6f6d;
/// Mixed into the seed for Monte Carlo frames.
const SIM_SALT: u64 = 0x7369_6d75;

/// Channels of one realization.
#[derive(Debug, Clone)]
pub struct Realization {
    pub seed: u64,
    pub geometry: Geometry,
    /// Responses on the `J'` design subcarriers.
    pub design: EffectiveChannel,
    /// Responses on all `J` subcarriers.
    pub full: EffectiveChannel,
}

impl Realization {
    pub fn draw(cfg: &ScenarioConfig, seed: u64) -> Result<Self, HarnessError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ GEOMETRY_SALT);
        let geometry = Geometry::random_users(cfg.k, &mut rng);
        let channels = generate_channels(&geometry, &cfg.channel_config(), seed)?;
        Ok(Realization {
            seed,
            design: assemble_effective(&channels, cfg.j_prime)?,
            full: assemble_effective(&channels, cfg.j)?,
            geometry,
        })
    }
}

/// One output row per realization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub seed: u64,
    pub optimizer: Optimizer,
    /// `None` on success, otherwise the error message.
    pub error: Option<String>,
    /// Average per-symbol power `(1/(J'K)) Σ |w|²` in watts.
    pub power_w: f64,
    pub power_dbm: f64,
    pub groups: usize,
    pub rounds: usize,
    pub bit_errors: Vec<u64>,
    pub bits: Vec<u64>,
    /// Monte Carlo BER per user after `T_max` iterations.
    pub ber: Vec<f64>,
    /// State-evolution BER per user after `T_max` iterations.
    pub se_ber: Vec<f64>,
    #[serde(skip)]
    pub runtime_s: f64,
}

impl Row {
    fn failed(seed: u64, optimizer: Optimizer, err: &HarnessError, runtime_s: f64) -> Self {
        Row {
            seed,
            optimizer,
            error: Some(err.to_string()),
            power_w: f64::NAN,
            power_dbm: f64::NAN,
            groups: 0,
            rounds: 0,
            bit_errors: Vec::new(),
            bits: Vec::new(),
            ber: Vec::new(),
            se_ber: Vec::new(),
            runtime_s,
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn max_ber(&self) -> Option<f64> {
        self.ber.iter().cloned().reduce(f64::max)
    }
}

/// State-evolution BER per user after `t_max` iterations (no genie cancellation).
pub fn predicted_ber(
    full: &EffectiveChannel,
    outcome: &MethodOutcome,
    table: &TransferTable,
    t_max: usize,
) -> Result<Vec<f64>, HarnessError> {
    let columns = effective_columns(full, &outcome.theta, &outcome.precoders)?;
    let k = columns.len();
    let trace = se_run(&vec![1.0; k], t_max, table, &columns, full.noise_power, None)?;
    Ok(trace.rho.last().map_or_else(|| vec![0.5; k], |r| r.iter().map(|&x| table.ber_at(x)).collect()))
}

/// Optimize, predict and simulate one realization.
pub fn run_realization(
    cfg: &ScenarioConfig,
    table: &TransferTable,
    seed: u64,
) -> Result<(Row, MethodOutcome), HarnessError> {
    let start = Instant::now();
    let real = Realization::draw(cfg, seed)?;
    let outcome = run_method(cfg.optimizer, cfg, table, &real.design, seed)?;
    let se_ber = predicted_ber(&real.full, &outcome, table, cfg.t_max)?;
    let (bit_errors, bits, ber) = if cfg.frames > 0 {
        let codecs = user_codecs(default_code(), cfg.k)?;
        let opts = SimOptions { frames: cfg.frames, t_max: cfg.t_max, bp_iters: cfg.bp_iters, seed: seed ^ SIM_SALT };
        let rep = simulate(&real.full, &outcome.theta, &outcome.precoders, &codecs, &opts)?;
        let ber = rep.ber();
        (rep.bit_errors, rep.bits, ber)
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    let row = Row {
        seed,
        optimizer: cfg.optimizer,
        error: None,
        power_w: outcome.power(),
        power_dbm: outcome.power_dbm(),
        groups: outcome.grouping.groups.iter().filter(|g| !g.is_empty()).count(),
        rounds: outcome.power_trace.len(),
        bit_errors,
        bits,
        ber,
        se_ber,
        runtime_s: start.elapsed().as_secs_f64(),
    };
    Ok((row, outcome))
}

/// Wilson score interval at 95% for `errors` out of `trials`.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = errors as f64 / n;
    let den = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / den;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / den;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub optimizer: Optimizer,
    pub realizations: usize,
    pub failures: usize,
    /// Mean linear power over successful realizations.
    pub mean_power_w: f64,
    /// `10 log10(1000 · mean_power_w)`.
    pub mean_power_dbm: f64,
    /// Mean of the per-realization dBm values.
    pub mean_of_dbm: f64,
    pub bit_errors: u64,
    pub bits: u64,
    pub ber: f64,
    pub ber_ci95: (f64, f64),
    /// Fraction of successful realizations whose worst user meets `1.5 P_tar`.
    pub closure_fraction: Option<f64>,
}

impl Aggregate {
    /// Summary of `rows`; the result does not depend on row order.
    pub fn from_rows(optimizer: Optimizer, rows: &[Row], p_tar: f64) -> Self {
        let mut ok: Vec<&Row> = rows.iter().filter(|r| r.ok()).collect();
        ok.sort_by_key(|r| r.seed);
        let n = ok.len().max(1) as f64;
        let mean_power_w = ok.iter().map(|r| r.power_w).sum::<f64>() / n;
        let bit_errors: u64 = ok.iter().flat_map(|r| &r.bit_errors).sum();
        let bits: u64 = ok.iter().flat_map(|r| &r.bits).sum();
        let simulated: Vec<f64> = ok.iter().filter_map(|r| r.max_ber()).collect();
        Aggregate {
            optimizer,
            realizations: rows.len(),
            failures: rows.len() - ok.len(),
            mean_power_w,
            mean_power_dbm: watts_to_dbm(mean_power_w),
            mean_of_dbm: ok.iter().map(|r| r.power_dbm).sum::<f64>() / n,
            bit_errors,
            bits,
            ber: bit_errors as f64 / bits.max(1) as f64,
            ber_ci95: wilson_interval(bit_errors, bits),
            closure_fraction: (!simulated.is_empty())
                .then(|| simulated.iter().filter(|&&b| b <= 1.5 * p_tar).count() as f64 / simulated.len() as f64),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ScenarioConfig,
    pub config_hash: String,
    /// Sorted by seed.
    pub rows: Vec<Row>,
    pub aggregate: Aggregate,
}

impl ExperimentReport {
    /// One line per realization. Identical for identical config and seeds.
    pub fn rows_csv(&self) -> String {
        let k = self.config.k;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> =
            ["seed", "optimizer", "status", "power_w", "power_dbm", "groups", "rounds", "bit_errors", "bits"]
                .iter()
                .map(|s| s.to_string())
                .collect();
        header.extend((0..k).map(|u| format!("ber_u{u}")));
        header.extend((0..k).map(|u| format!("se_ber_u{u}")));
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![
                r.seed.to_string(),
                r.optimizer.name().to_string(),
                r.error.clone().unwrap_or_else(|| "ok".into()),
                format!("{:.9e}", r.power_w),
                format!("{:.6}", r.power_dbm),
                r.groups.to_string(),
                r.rounds.to_string(),
                r.bit_errors.iter().sum::<u64>().to_string(),
                r.bits.iter().sum::<u64>().to_string(),
            ];
            let cell = |v: &[f64], u: usize| v.get(u).map_or(String::new(), |x| format!("{x:.6e}"));
            rec.extend((0..k).map(|u| cell(&r.ber, u)));
            rec.extend((0..k).map(|u| cell(&r.se_ber, u)));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    /// Wall-clock seconds per realization (kept apart from the rows so
    /// that the rows replay exactly).
    pub fn timing_csv(&self) -> String {
        let mut s = String::from("seed,runtime_s\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:.3}\n", r.seed, r.runtime_s));
        }
        s
    }

    pub fn manifest(&self, git_revision: Option<String>) -> serde_json::Value {
        serde_json::json!({
            "schema_version": self.config.schema_version,
            "config_hash": self.config_hash,
            "config": self.config,
            "seeds": self.rows.iter().map(|r| r.seed).collect::<Vec<_>>(),
            "git_revision": git_revision,
            "package_version": env!("CARGO_PKG_VERSION"),
            "optimizer": self.config.optimizer,
            "reconstruction": self.config.optimizer == Optimizer::DiagonalPath,
            "power_unit": "dBm = 10 log10(1000 W)",
            "aggregate": self.aggregate,
        })
    }

    /// Writes `rows.csv`, `timing.csv` and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("rows.csv"), self.rows_csv())?;
        std::fs::write(dir.join("timing.csv"), self.timing_csv())?;
        let manifest = serde_json::to_string_pretty(&self.manifest(git_revision()))?;
        std::fs::write(dir.join("manifest.json"), manifest + "\n")?;
        Ok(())
    }
}

/// `git rev-parse HEAD` of the working directory, if available.
pub fn git_revision() -> Option<String> {
    let out = std::process::Command::new("git").args(["rev-parse", "HEAD"]).output().ok()?;
    out.status.success().then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
}

/// Runs every realization of `cfg` (in parallel) and aggregates.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let table = load_transfer(cfg)?;
    let mut rows: Vec<Row> = cfg
        .seeds()
        .into_par_iter()
        .map(|seed| {
            let start = Instant::now();
            match run_realization(cfg, &table, seed) {
                Ok((row, _)) => row,
                Err(e) => Row::failed(seed, cfg.optimizer, &e, start.elapsed().as_secs_f64()),
            }
        })
        .collect();
    rows.sort_by_key(|r| r.seed);
    let aggregate = Aggregate::from_rows(cfg.optimizer, &rows, cfg.p_tar);
    Ok(ExperimentReport { config: cfg.clone(), config_hash: cfg.hash(), rows, aggregate })
}

/// Runs `cfg` once per value of `key`, returning `(value, aggregate)` pairs.
pub fn sweep(cfg: &ScenarioConfig, key: &str, values: &[String]) -> Result<Vec<(String, Aggregate)>, HarnessError> {
    values
        .iter()
        .map(|v| {
            let c = cfg.with_override(key, v)?;
            Ok((v.clone(), run_experiment(&c)?.aggregate))
        })
        .collect()
}

/// CSV of sweep results.
pub fn sweep_csv(key: &str, results: &[(String, Aggregate)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        key,
        "optimizer",
        "realizations",
        "failures",
        "mean_power_dbm",
        "mean_of_dbm",
        "ber",
        "ber_lo",
        "ber_hi",
        "closure_fraction",
    ])
    .expect("in-memory write");
    for (v, a) in results {
        w.write_record([
            v.clone(),
            a.optimizer.name().into(),
            a.realizations.to_string(),
            a.failures.to_string(),
            format!("{:.6}", a.mean_power_dbm),
            format!("{:.6}", a.mean_of_dbm),
            format!("{:.6e}", a.ber),
            format!("{:.6e}", a.ber_ci95.0),
            format!("{:.6e}", a.ber_ci95.1),
            a.closure_fraction.map_or(String::new(), |c| format!("{c:.4}")),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
