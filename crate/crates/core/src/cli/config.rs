use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assertions::{Engine, Setting};
use crate::lang::{Lattice, LatticeError, ValueDomain};
use crate::oracle::OracleConfig;
use crate::summaries::Driver;
use crate::symex::{Bounds, Options};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "text" => Ok(Format::Text),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format `{s}` (expected text or json)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Text => "text",
            Format::Json => "json",
        })
    }
}

/// Every analysis setting. Loaded from TOML, then overridden by flags.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Config {
    /// Level names, least to greatest, forming a chain.
    pub lattice: Vec<String>,
    pub attacker_level: String,
    pub engine: Engine,
    pub driver: Driver,
    pub unroll: usize,
    pub path_cap: usize,
    pub work_budget: u64,
    pub ct: bool,
    /// Bit width of values during analysis.
    pub bits: u32,
    pub oracle: bool,
    pub oracle_bits: u32,
    pub oracle_steps: usize,
    pub summaries: Option<PathBuf>,
    pub format: Format,
}

impl Default for Config {
    fn default() -> Self {
        let b = Bounds::default();
        Config {
            lattice: vec!["low".into(), "high".into()],
            attacker_level: "low".into(),
            engine: Engine::Unary,
            driver: Driver::BottomUp,
            unroll: b.unroll,
            path_cap: b.path_cap,
            work_budget: b.work_budget,
            ct: false,
            bits: ValueDomain::default().bits(),
            oracle: true,
            oracle_bits: 2,
            oracle_steps: 64,
            summaries: None,
            format: Format::Text,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Set one field by its TOML key. `value` is read as a TOML value
    /// when it parses as one, otherwise as a bare string.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let mut table = match toml::Value::try_from(&*self).map_err(|e| e.to_string())? {
            toml::Value::Table(t) => t,
            _ => unreachable!("config serialises to a table"),
        };
        let parsed = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let parsed = match (table.get(key), parsed) {
            (Some(toml::Value::String(_)), v) if !v.is_str() => toml::Value::String(value.to_string()),
            (_, v) => v,
        };
        table.insert(key.to_string(), parsed);
        *self = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| e.to_string())?;
        Ok(())
    }

    pub fn lattice(&self) -> Result<Lattice, LatticeError> {
        let names: Vec<&str> = self.lattice.iter().map(String::as_str).collect();
        Lattice::chain(&names)
    }

    fn setting(&self, bits: u32) -> Result<Setting, LatticeError> {
        let lattice = self.lattice()?;
        let attacker = lattice.level(&self.attacker_level)?;
        Ok(Setting::new(lattice, attacker, ValueDomain::new(bits)))
    }

    pub fn options(&self) -> Result<Options, LatticeError> {
        Ok(Options {
            setting: self.setting(self.bits)?,
            engine: self.engine,
            bounds: Bounds {
                unroll: self.unroll,
                path_cap: self.path_cap,
                work_budget: self.work_budget,
            },
            ct: self.ct,
        })
    }

    pub fn oracle_config(&self) -> Result<OracleConfig, LatticeError> {
        let mut oc = OracleConfig::new(self.setting(self.oracle_bits)?);
        oc.max_steps = self.oracle_steps;
        oc.ct = self.ct;
        Ok(oc)
    }
}
