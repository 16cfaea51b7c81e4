//! Run configuration: a single TOML document covering world generation,
//! reward shaping, training, ablation seeds, and the summarizer backend,
//! with dotted-path command-line overrides and an environment override for
//! the summarizer endpoint.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::WorldConfig;
use crate::reward::RewardConfig;
use crate::trainer::TrainConfig;

/// Name of the environment variable that redirects guideline generation to a
/// remote endpoint.
pub const SUMMARIZER_ENDPOINT_VAR: &str = "SEARCHLAB_SUMMARIZER_ENDPOINT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummarizerKind {
    RuleBased,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SummarizerConfig {
    pub kind: SummarizerKind,
    pub endpoint: Option<String>,
    pub timeout_secs: u64,
}

impl Default for SummarizerConfig {
    fn default() -> Self {
        SummarizerConfig { kind: SummarizerKind::RuleBased, endpoint: None, timeout_secs: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub world: WorldConfig,
    pub reward: RewardConfig,
    pub train: TrainConfig,
    /// Seeds used by the ablation matrix (and available to scripts).
    pub seeds: Vec<u64>,
    pub summarizer: SummarizerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            world: WorldConfig::default(),
            reward: RewardConfig::default(),
            train: TrainConfig::default(),
            seeds: vec![1, 2, 3, 4, 5],
            summarizer: SummarizerConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.world
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.reward
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("seeds must not be empty".into()));
        }
        if self.summarizer.kind == SummarizerKind::Remote && self.summarizer.endpoint.is_none() {
            return Err(ConfigError::Invalid(
                "summarizer.kind = \"remote\" requires summarizer.endpoint".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("bad override {0}: expected key.path=value")]
    BadOverride(String),
    #[error("override path {0} does not name a config field")]
    UnknownOverridePath(String),
}

/// Parses an override value the way TOML would: bool, then integer, then
/// float, then string.
fn parse_override_value(raw: &str) -> toml::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    toml::Value::String(raw.to_string())
}

fn apply_override(doc: &mut toml::Value, spec: &str) -> Result<(), ConfigError> {
    let (path, raw_value) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(ConfigError::BadOverride(spec.to_string()));
    }
    let segments: Vec<&str> = path.split('.').collect();
    let mut node = doc;
    for segment in &segments[..segments.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| ConfigError::UnknownOverridePath(path.to_string()))?;
        node = table
            .entry(segment.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| ConfigError::UnknownOverridePath(path.to_string()))?;
    table.insert(
        segments.last().unwrap().to_string(),
        parse_override_value(raw_value.trim()),
    );
    Ok(())
}

/// Loads the run config: the file when given (defaults otherwise), then
/// `key.path=value` overrides in order, then the summarizer endpoint
/// environment variable, and finally validation. Unknown fields and unknown
/// override paths are rejected.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    load_config_with_env(path, overrides, std::env::var(SUMMARIZER_ENDPOINT_VAR).ok())
}

/// [`load_config`] with the environment lookup injected, for tests.
pub fn load_config_with_env(
    path: Option<&Path>,
    overrides: &[String],
    endpoint_env: Option<String>,
) -> Result<RunConfig, ConfigError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
            path: p.display().to_string(),
            source,
        })?,
        None => String::new(),
    };
    let mut doc: toml::Value =
        toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    if !doc.is_table() {
        return Err(ConfigError::Parse("config root must be a table".into()));
    }
    for spec in overrides {
        apply_override(&mut doc, spec)?;
    }
    let mut cfg: RunConfig = doc
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    if let Some(endpoint) = endpoint_env {
        if !endpoint.trim().is_empty() {
            cfg.summarizer.kind = SummarizerKind::Remote;
            cfg.summarizer.endpoint = Some(endpoint.trim().to_string());
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
