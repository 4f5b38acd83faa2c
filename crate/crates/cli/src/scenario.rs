//! TOML scenario files.
//!
//! Every simulation and PHY parameter has a key; anything not given takes
//! the library default. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use v2x_ledger::phy::{McsTable, Numerology, PhyConfig, SubchannelSizing};
use v2x_ledger::sim::{SimConfig, SimMode};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Baseline,
    Ledger,
    Both,
}

impl From<ModeName> for SimMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Baseline => SimMode::Baseline,
            ModeName::Ledger => SimMode::Ledger,
            ModeName::Both => SimMode::Both,
        }
    }
}

impl From<SimMode> for ModeName {
    fn from(m: SimMode) -> Self {
        match m {
            SimMode::Baseline => ModeName::Baseline,
            SimMode::Ledger => ModeName::Ledger,
            SimMode::Both => ModeName::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizingName {
    ExactFit,
    Standard,
}

impl From<SizingName> for SubchannelSizing {
    fn from(s: SizingName) -> Self {
        match s {
            SizingName::ExactFit => SubchannelSizing::ExactFit,
            SizingName::Standard => SubchannelSizing::Standard,
        }
    }
}

impl From<SubchannelSizing> for SizingName {
    fn from(s: SubchannelSizing) -> Self {
        match s {
            SubchannelSizing::ExactFit => SizingName::ExactFit,
            SubchannelSizing::Standard => SizingName::Standard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhySection {
    pub subcarriers_per_rb: u32,
    pub sh_symbols: u32,
    pub pfsch_symbols: u32,
    pub overhead_re: u32,
    pub dmrs_re: u32,
    pub sizing: SizingName,
}

impl Default for PhySection {
    fn default() -> Self {
        PhyConfig::default().into()
    }
}

impl From<PhyConfig> for PhySection {
    fn from(p: PhyConfig) -> Self {
        Self {
            subcarriers_per_rb: p.subcarriers_per_rb,
            sh_symbols: p.sh_symbols,
            pfsch_symbols: p.pfsch_symbols,
            overhead_re: p.overhead_re,
            dmrs_re: p.dmrs_re,
            sizing: p.sizing.into(),
        }
    }
}

impl From<&PhySection> for PhyConfig {
    fn from(p: &PhySection) -> Self {
        Self {
            subcarriers_per_rb: p.subcarriers_per_rb,
            sh_symbols: p.sh_symbols,
            pfsch_symbols: p.pfsch_symbols,
            overhead_re: p.overhead_re,
            dmrs_re: p.dmrs_re,
            sizing: p.sizing.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub num_vehicles: usize,
    pub rri_ms: u32,
    pub numerology: u8,
    pub payload_bytes: u32,
    pub mcs_index: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcs_table: Option<PathBuf>,
    pub num_rris: u32,
    pub seeds: Vec<u64>,
    pub mode: ModeName,
    pub keep_probability: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subchannels_per_slot: Option<u32>,
    pub allow_overload: bool,
    pub ledger_retention_rris: u32,
    pub log_events: bool,
    pub phy: PhySection,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::from_sim_config(&SimConfig::default(), None)
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a scenario; a relative `mcs_table` is taken relative to the file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut s = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let (Some(table), Some(dir)) = (&s.mcs_table, path.parent()) {
            if table.is_relative() {
                s.mcs_table = Some(dir.join(table));
            }
        }
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn from_sim_config(cfg: &SimConfig, mcs_table: Option<PathBuf>) -> Self {
        Self {
            num_vehicles: cfg.num_vehicles,
            rri_ms: cfg.rri_ms,
            numerology: cfg.numerology.mu,
            payload_bytes: cfg.payload_bytes,
            mcs_index: cfg.mcs.index,
            mcs_table,
            num_rris: cfg.num_rris,
            seeds: cfg.seeds.clone(),
            mode: cfg.mode.into(),
            keep_probability: cfg.keep_probability,
            subchannels_per_slot: cfg.subchannels_per_slot,
            allow_overload: cfg.allow_overload,
            ledger_retention_rris: cfg.ledger_retention_rris,
            log_events: cfg.log_events,
            phy: cfg.phy.into(),
        }
    }

    /// Resolves numerology and MCS; does not check capacity.
    pub fn to_sim_config(&self) -> Result<SimConfig, CliError> {
        let numerology = Numerology::from_mu(self.numerology).map_err(|e| CliError::Config(e.to_string()))?;
        let table = match &self.mcs_table {
            Some(p) => McsTable::load(p).map_err(|e| CliError::Config(e.to_string()))?,
            None => McsTable::bundled(),
        };
        let mcs = table.lookup(self.mcs_index).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(SimConfig {
            num_vehicles: self.num_vehicles,
            rri_ms: self.rri_ms,
            numerology,
            payload_bytes: self.payload_bytes,
            mcs,
            phy: (&self.phy).into(),
            subchannels_per_slot: self.subchannels_per_slot,
            num_rris: self.num_rris,
            seeds: self.seeds.clone(),
            mode: self.mode.into(),
            keep_probability: self.keep_probability,
            allow_overload: self.allow_overload,
            ledger_retention_rris: self.ledger_retention_rris,
            log_events: self.log_events,
        })
    }
}

/// Parses `1-30`, `4`, `1,2,7-9` into an ordered seed list.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>, String> {
    let mut seeds = Vec::new();
    for part in spec.split(',').map(str::trim) {
        let bad = || format!("bad seed list element {part:?}");
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad())?;
                let b: u64 = b.trim().parse().map_err(|_| bad())?;
                if b < a {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(seeds)
}
