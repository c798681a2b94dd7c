//! `ris-sim`: command-line front end for scenario runs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ris_iterative::coding::transfer::DecTransfer;
use ris_iterative::coding::{default_code, estimate_transfer, Codec, Constellation, TransferOptions, DEFAULT_BP_ITERS};
use ris_iterative::harness::experiment::{predicted_ber, sweep_csv};
use ris_iterative::harness::{
    load_transfer, run_experiment, run_method, sweep, MethodOutcome, Realization, ScenarioConfig,
};
use ris_iterative::state_evolution::se_run;
use ris_iterative::transceiver::{effective_columns, simulate, user_codecs, SimOptions};

#[derive(Parser)]
#[command(name = "ris-sim", version, about = "RIS-aided uplink MIMO-OFDM simulation and power minimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario file (TOML); defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Field override `key=value`, applied after the file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => ScenarioConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => ScenarioConfig::default(),
        };
        for o in &self.overrides {
            let Some((k, v)) = o.split_once('=') else {
                bail!("override `{o}` is not of the form key=value");
            };
            cfg = cfg.with_override(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the default scenario file.
    DefaultConfig,
    /// Optimize one realization and write the design and its round trace.
    Optimize {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (defaults to the scenario's `output_dir`).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Optimize one realization, then measure BER by Monte Carlo.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Optimize one realization and write its state-evolution trajectory.
    SeTrace {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run every realization of the scenario, optionally once per value of one field.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Field to vary.
        #[arg(long, requires = "values")]
        key: Option<String>,
        /// Comma-separated values of `key`.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Estimate the decoder transfer table of the shipped code.
    TransferTable {
        /// Frames per SINR grid point (at least 100).
        #[arg(long, default_value_t = 400)]
        frames: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_BP_ITERS)]
        bp_iters: usize,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(out: &Option<PathBuf>, cfg: &ScenarioConfig) -> PathBuf {
    out.clone().unwrap_or_else(|| cfg.output_dir.clone())
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn design(cfg: &ScenarioConfig, seed: u64) -> Result<(Realization, MethodOutcome)> {
    let table = load_transfer(cfg)?;
    let real = Realization::draw(cfg, seed)?;
    let outcome = run_method(cfg.optimizer, cfg, &table, &real.design, seed)?;
    println!(
        "{} seed {seed}: {:.3} dBm after {} rounds, groups {:?}",
        cfg.optimizer.name(),
        outcome.power_dbm(),
        outcome.power_trace.len(),
        outcome.grouping.groups
    );
    Ok((real, outcome))
}

fn design_json(cfg: &ScenarioConfig, seed: u64, o: &MethodOutcome) -> Result<String> {
    let v = serde_json::json!({
        "config_hash": cfg.hash(),
        "seed": seed,
        "optimizer": cfg.optimizer,
        "reconstruction": o.reconstruction,
        "power_w": o.power(),
        "power_dbm": o.power_dbm(),
        "power_trace_w": o.power_trace,
        "grouping": o.grouping,
        "theta": o.theta,
        "precoders": o.precoders,
    });
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::DefaultConfig => print!("{}", ScenarioConfig::default().to_toml()),
        Command::Optimize { scenario, seed, out } => {
            let cfg = scenario.load()?;
            let (_, o) = design(&cfg, seed)?;
            let dir = out_dir(&out, &cfg);
            write(&dir, "design.json", &design_json(&cfg, seed, &o)?)?;
            let mut trace = String::from("round,power_w,power_dbm\n");
            for (i, p) in o.power_trace.iter().enumerate() {
                trace.push_str(&format!("{i},{p:.9e},{:.6}\n", 10.0 * (1000.0 * p).log10()));
            }
            write(&dir, "rounds.csv", &trace)?;
        }
        Command::Simulate { scenario, seed, out } => {
            let cfg = scenario.load()?;
            if cfg.frames == 0 {
                bail!("frames must be positive to simulate");
            }
            let (real, o) = design(&cfg, seed)?;
            let codecs = user_codecs(default_code(), cfg.k)?;
            let opts = SimOptions { frames: cfg.frames, t_max: cfg.t_max, bp_iters: cfg.bp_iters, seed };
            let rep = simulate(&real.full, &o.theta, &o.precoders, &codecs, &opts)?;
            let table = load_transfer(&cfg)?;
            let se = predicted_ber(&real.full, &o, &table, cfg.t_max)?;
            let mut csv = String::from("iteration,user,rho,v,ext_err\n");
            for t in 0..cfg.t_max {
                for u in 0..cfg.k {
                    csv.push_str(&format!(
                        "{},{u},{:.9e},{:.9e},{:.9e}\n",
                        t + 1,
                        rep.rho_trace[t][u],
                        rep.v_trace[t][u],
                        rep.ext_err_trace[t][u]
                    ));
                }
            }
            for (u, b) in rep.ber().iter().enumerate() {
                println!("user {u}: BER {b:.3e} (state evolution {:.3e})", se[u]);
            }
            let dir = out_dir(&out, &cfg);
            write(&dir, "receiver_trace.csv", &csv)?;
            write(&dir, "design.json", &design_json(&cfg, seed, &o)?)?;
        }
        Command::SeTrace { scenario, seed, out } => {
            let cfg = scenario.load()?;
            let (real, o) = design(&cfg, seed)?;
            let table = load_transfer(&cfg)?;
            let columns = effective_columns(&real.full, &o.theta, &o.precoders)?;
            let trace = se_run(&vec![1.0; cfg.k], cfg.t_max, &table as &dyn DecTransfer, &columns, real.full.noise_power, None)?;
            write(&out_dir(&out, &cfg), "se_trace.csv", &trace.to_csv())?;
        }
        Command::Sweep { scenario, key, values, out } => {
            let cfg = scenario.load()?;
            let dir = out_dir(&out, &cfg);
            match key {
                None => {
                    let rep = run_experiment(&cfg)?;
                    rep.write(&dir)?;
                    let a = &rep.aggregate;
                    println!(
                        "{}: mean power {:.3} dBm, BER {:.3e}, {} failures, wrote {}",
                        cfg.optimizer.name(),
                        a.mean_power_dbm,
                        a.ber,
                        a.failures,
                        dir.display()
                    );
                }
                Some(key) => {
                    let results = sweep(&cfg, &key, &values)?;
                    write(&dir, "sweep.csv", &sweep_csv(&key, &results))?;
                }
            }
        }
        Command::TransferTable { frames, seed, bp_iters, out } => {
            let codec = Codec::new(default_code(), Constellation::qpsk(), 1)?;
            let opts =
                TransferOptions { rho_db: TransferOptions::default_grid(), frames_per_point: frames, bp_iters, seed, target_ber: None };
            let table = estimate_transfer(&codec, &opts)?;
            match out {
                Some(p) => {
                    std::fs::write(&p, table.to_text())?;
                    println!("wrote {}", p.display());
                }
                None => print!("{}", table.to_text()),
            }
        }
    }
    Ok(())
}
