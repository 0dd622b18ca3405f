//! Service configuration: a TOML file whose every key can be overridden
//! by an environment variable `HIKESTER_<KEY IN UPPER SNAKE CASE>`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "HIKESTER_";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(String),
    #[error("environment variable {var}: {message}")]
    Env { var: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub bind: String,
    /// 0 picks a free port.
    pub port: u16,
    /// Store directory; empty keeps everything in memory.
    pub data_dir: PathBuf,
    pub snapshot_every: u64,
    pub fsync: bool,
    /// `label<TAB>text` file used to train the classifier when the store
    /// holds no model yet.
    pub spam_corpus: PathBuf,
    pub classifier_threshold: f64,
    pub nb_alpha: f64,
    pub theta: f64,
    pub recommender_retrain_n: usize,
    pub kmeans_k: usize,
    pub optimizer_retrain_n: usize,
    pub geohash_precision: usize,
    pub heartbeat_ms: u64,
    /// How often finished events are turned into training tuples.
    pub sweep_interval_ms: u64,
    pub page_limit: usize,
    pub trigger_retries: u32,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            bind: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::new(),
            snapshot_every: 1000,
            fsync: false,
            spam_corpus: PathBuf::new(),
            classifier_threshold: 0.9,
            nb_alpha: 1.0,
            theta: 0.3,
            recommender_retrain_n: 100,
            kmeans_k: 8,
            optimizer_retrain_n: 50,
            geohash_precision: 5,
            heartbeat_ms: 30_000,
            sweep_interval_ms: 60_000,
            page_limit: 50,
            trigger_retries: 3,
        }
    }
}

impl Config {
    /// Defaults, then the file (if any), then environment overrides.
    pub fn load(file: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load_with_env(file, std::env::vars())
    }

    pub fn load_with_env(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let mut table = match toml::Value::try_from(Config::default()).map_err(|e| ConfigError::Parse(e.to_string()))? {
            toml::Value::Table(t) => t,
            _ => unreachable!("config serialises to a table"),
        };
        if let Some(path) = file {
            let text =
                std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
            let from_file: toml::Table =
                text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
            for (k, v) in from_file {
                table.insert(k, v);
            }
        }
        for (var, raw) in env {
            let Some(key) = var.strip_prefix(ENV_PREFIX) else { continue };
            let key = key.to_ascii_lowercase();
            let Some(current) = table.get(&key) else {
                return Err(ConfigError::Env { var, message: "unknown key".into() });
            };
            let parsed =
                match current {
                    toml::Value::String(_) => toml::Value::String(raw),
                    _ => format!("v = {raw}").parse::<toml::Table>().ok().and_then(|mut t| t.remove("v")).ok_or_else(
                        || ConfigError::Env { var: var.clone(), message: format!("cannot parse {raw:?}") },
                    )?,
                };
            table.insert(key, parsed);
        }
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))
    }

    pub fn data_dir(&self) -> Option<&Path> {
        (!self.data_dir.as_os_str().is_empty()).then_some(self.data_dir.as_path())
    }

    pub fn spam_corpus(&self) -> Option<&Path> {
        (!self.spam_corpus.as_os_str().is_empty()).then_some(self.spam_corpus.as_path())
    }

    /// Small, fast settings for tests: in memory, random port.
    pub fn ephemeral() -> Self {
        Config { port: 0, sweep_interval_ms: 0, ..Config::default() }
    }
}
