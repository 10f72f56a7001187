//! The TOML run configuration shared by every subcommand.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crowdnav_core::demo::NoiseModel;
use crowdnav_core::features::FeatureConfig;
use crowdnav_core::nav::{NavConfig, RuntimeConfig};
use crowdnav_core::sim::{Scenario, SimParams};
use crowdnav_core::svcr::SvcrConfig;
use crowdnav_core::tmedirl::TrainingConfig;

/// Environment variable consulted when no `--config` flag is given.
pub const CONFIG_ENV: &str = "CROWDNAV_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectConfig {
    pub episodes: usize,
    /// Noise probabilities, cycled over episodes.
    pub noise_levels: Vec<f64>,
    pub noise_model: NoiseModel,
    /// Scenario seed of the first episode; episode `k` uses `seed + k`.
    pub seed: u64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self { episodes: 100, noise_levels: vec![0.0, 0.5], noise_model: NoiseModel::Careless, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub episodes: usize,
    pub seed: u64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self { episodes: 50, seed: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: Scenario,
    pub sim: SimParams,
    pub features: FeatureConfig,
    pub nav: NavConfig,
    pub svcr: SvcrConfig,
    pub training: TrainingConfig,
    pub collect: CollectConfig,
    pub evaluate: EvaluateConfig,
}

impl Config {
    pub fn runtime(&self) -> RuntimeConfig {
        RuntimeConfig { sim: self.sim, features: self.features, nav: self.nav, svcr: self.svcr }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.scenario.validate()?;
        self.runtime().validate()?;
        self.training.validate()?;
        if self.collect.noise_levels.is_empty() || self.collect.noise_levels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            bail!("collect.noise_levels must be non-empty probabilities");
        }
        if self.evaluate.episodes == 0 {
            bail!("evaluate.episodes must be >= 1");
        }
        Ok(())
    }

    pub fn from_toml(text: &str, overrides: &[String]) -> anyhow::Result<Self> {
        let mut table: toml::Table = toml::from_str(text).context("parsing config")?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Config = toml::Value::Table(table).try_into().context("reading config")?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` (or defaults when `None`) and applies `key.path=value`
    /// overrides on top.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// Sets one dotted key, e.g. `training.lambda_rank=0`. The value is parsed
/// as a TOML value and falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> anyhow::Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .with_context(|| format!("override {assignment:?} is not key=value"))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().context("empty override key")?;
    let mut cursor = table;
    for part in path {
        cursor = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .with_context(|| format!("{part} is not a table"))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}
