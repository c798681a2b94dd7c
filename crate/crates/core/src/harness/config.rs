//! Scenario files.
//!
//! A scenario is a TOML document with `schema_version = 1`. Every field
//! except `schema_version` has a default, so an empty table (plus the
//! version) describes the desk-scale default scenario.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::channel::{dbm_to_watts, ChannelConfig, Pathloss};

pub const SCHEMA_VERSION: u32 = 1;

/// Identifier of the shipped length-1024 rate-1/2 code.
pub const DEFAULT_CODE_ID: &str = "ldpc-3-6-1024";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    /// Groupwise SIC with alternating FP/SCA.
    Sic,
    /// Groupwise SIC with regrouping after every round.
    SicRegroup,
    /// Single-group precoding without the RIS.
    NoRis,
    /// Single-group precoding at random phases.
    RandomPhase,
    /// Single path moving all variances together.
    DiagonalPath,
    /// Capacity-region constraints.
    Info,
}

impl Optimizer {
    pub fn name(self) -> &'static str {
        match self {
            Optimizer::Sic => "sic",
            Optimizer::SicRegroup => "sic-regroup",
            Optimizer::NoRis => "no-ris",
            Optimizer::RandomPhase => "random-phase",
            Optimizer::DiagonalPath => "diagonal-path",
            Optimizer::Info => "info",
        }
    }
}

impl std::str::FromStr for Optimizer {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Optimizer::Sic,
            Optimizer::SicRegroup,
            Optimizer::NoRis,
            Optimizer::RandomPhase,
            Optimizer::DiagonalPath,
            Optimizer::Info,
        ]
        .into_iter()
        .find(|o| o.name() == s)
        .ok_or_else(|| HarnessError::InvalidConfig(format!("unknown optimizer `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub j: usize,
    pub j_prime: usize,
    pub t_max: usize,
    pub noise_dbm: f64,
    /// Bits per symbol (QPSK only).
    pub q: usize,
    pub code: String,
    /// Transfer table file replacing the shipped one.
    pub transfer_table: Option<PathBuf>,
    pub p_tar: f64,
    pub l_ub: usize,
    pub l_ur: usize,
    pub l_rb: usize,
    pub l_cp: usize,
    pub rician_ur: f64,
    pub rician_rb: f64,
    pub pathloss_exponent_ub: f64,
    pub pathloss_exponent_ur: f64,
    pub pathloss_exponent_rb: f64,
    /// Gain at one metre, shared by all links.
    pub pathloss_gain: f64,
    pub first_seed: u64,
    pub realizations: usize,
    /// Monte Carlo frames per realization; zero skips simulation.
    pub frames: usize,
    pub bp_iters: usize,
    pub optimizer: Optimizer,
    pub ao_rounds: usize,
    pub output_dir: PathBuf,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let ch = ChannelConfig::with_sizes(4, 32, 256);
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            k: 4,
            m: ch.m,
            n: ch.n,
            j: ch.j,
            j_prime: 8,
            t_max: 4,
            noise_dbm: -105.0,
            q: 2,
            code: DEFAULT_CODE_ID.into(),
            transfer_table: None,
            p_tar: 1e-2,
            l_ub: ch.l_ub,
            l_ur: ch.l_ur,
            l_rb: ch.l_rb,
            l_cp: ch.l_cp,
            rician_ur: ch.rician_ur,
            rician_rb: ch.rician_rb,
            pathloss_exponent_ub: ch.pathloss_ub.exponent,
            pathloss_exponent_ur: ch.pathloss_ur.exponent,
            pathloss_exponent_rb: ch.pathloss_rb.exponent,
            pathloss_gain: ch.pathloss_ub.gain,
            first_seed: 0,
            realizations: 50,
            frames: 100,
            bp_iters: 30,
            optimizer: Optimizer::Sic,
            ao_rounds: 30,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.into()));
        if self.schema_version != SCHEMA_VERSION {
            return bad(&format!("schema_version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.k == 0 || self.m == 0 || self.j == 0 {
            return bad("K, M and J must be positive");
        }
        if self.j_prime == 0 || self.j % self.j_prime != 0 {
            return bad("J' must divide J");
        }
        if self.t_max == 0 {
            return bad("T_max must be at least 1");
        }
        if !self.noise_dbm.is_finite() {
            return bad("noise power must be finite");
        }
        if !(self.p_tar > 0.0 && self.p_tar < 0.5) {
            return bad("P_tar must lie in (0, 0.5)");
        }
        if self.q != 2 {
            return bad("only QPSK (q = 2) is supported");
        }
        if self.code != DEFAULT_CODE_ID {
            return bad(&format!("unknown code `{}`", self.code));
        }
        if self.realizations == 0 {
            return bad("at least one realization");
        }
        if self.optimizer == Optimizer::Info && self.k > crate::info::MAX_USERS {
            return bad(&format!("the info optimizer handles at most {} users", crate::info::MAX_USERS));
        }
        self.channel_config().validate()?;
        let frame = crate::coding::default_code().n() / 2;
        if frame % self.j != 0 {
            return bad(&format!("J must divide the {frame}-symbol frame"));
        }
        Ok(())
    }

    /// Copy with field `key` set to `value`, written as a TOML value
    /// (bare words are taken as strings). The result is validated.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self, HarnessError> {
        let invalid = |e: &dyn std::fmt::Display| HarnessError::InvalidConfig(format!("{key} = {value}: {e}"));
        let mut table = toml::Table::try_from(self).map_err(|e| invalid(&e))?;
        if !table.contains_key(key) && key != "transfer_table" {
            return Err(HarnessError::InvalidConfig(format!("unknown field `{key}`")));
        }
        let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        table.insert(key.to_string(), parsed);
        let cfg: ScenarioConfig = table.try_into().map_err(|e| invalid(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn noise_power(&self) -> f64 {
        dbm_to_watts(self.noise_dbm)
    }

    pub fn channel_config(&self) -> ChannelConfig {
        let pl = |exponent| Pathloss { gain: self.pathloss_gain, exponent };
        ChannelConfig {
            m: self.m,
            n: self.n,
            j: self.j,
            l_ub: self.l_ub,
            l_ur: self.l_ur,
            l_rb: self.l_rb,
            l_cp: self.l_cp,
            rician_ur: self.rician_ur,
            rician_rb: self.rician_rb,
            pathloss_ub: pl(self.pathloss_exponent_ub),
            pathloss_ur: pl(self.pathloss_exponent_ur),
            pathloss_rb: pl(self.pathloss_exponent_rb),
            noise_power: self.noise_power(),
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.realizations as u64).map(|i| self.first_seed + i).collect()
    }

    /// SHA-256 of the compact JSON encoding (fields in declaration order).
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
