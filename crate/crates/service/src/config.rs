use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use adstrength_core::annindex::IndexParams;
use adstrength_core::corpus::DEFAULT_TOP_PUBLISHERS;
use adstrength_core::tsi::TsiConfig;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const ENV_PREFIX: &str = "ADSTRENGTH_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub pctr_ms: u64,
    pub retrieval_ms: u64,
    pub total_ms: u64,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            pctr_ms: 200,
            retrieval_ms: 200,
            total_ms: 900,
        }
    }
}

impl Budgets {
    pub fn pctr(&self) -> Duration {
        Duration::from_millis(self.pctr_ms)
    }

    pub fn retrieval(&self) -> Duration {
        Duration::from_millis(self.retrieval_ms)
    }

    pub fn total(&self) -> Duration {
        Duration::from_millis(self.total_ms)
    }
}

/// How a rebuild from the pool file embeds ads when no index is loaded yet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RebuildEmbedder {
    Hashed { dim: usize, seed: u64 },
    /// Vocabulary fitted on the pool being indexed.
    Tfidf { min_df: u32 },
    External { endpoint: String, dim: usize },
}

impl Default for RebuildEmbedder {
    fn default() -> Self {
        RebuildEmbedder::Hashed { dim: 128, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Ad pool JSONL used by `/v1/index/rebuild`.
    pub pool_path: Option<PathBuf>,
    /// Prebuilt index loaded at startup.
    pub index_path: Option<PathBuf>,
    /// Exactly one pCTR source must be set.
    pub model_path: Option<PathBuf>,
    pub pctr_endpoint: Option<String>,
    pub pctr_table_path: Option<PathBuf>,
    pub events_path: PathBuf,
    pub blocklist_path: Option<PathBuf>,
    pub top_publishers: usize,
    /// Build the index from `pool_path` at startup when no index file is given.
    pub build_on_start: bool,
    pub budgets: Budgets,
    pub tsi: TsiSection,
    pub index: IndexParams,
    pub embedder: RebuildEmbedder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsiSection {
    pub k: usize,
    pub delta: f64,
    pub min_sim: f64,
}

impl Default for TsiSection {
    fn default() -> Self {
        let d = TsiConfig::<f64>::default();
        TsiSection {
            k: d.k,
            delta: d.delta,
            min_sim: d.min_sim,
        }
    }
}

impl TsiSection {
    pub fn to_config(self) -> Result<TsiConfig<f64>> {
        Ok(TsiConfig::new(self.k, self.delta, self.min_sim)?)
    }
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            pool_path: None,
            index_path: None,
            model_path: None,
            pctr_endpoint: None,
            pctr_table_path: None,
            events_path: PathBuf::from("events.jsonl"),
            blocklist_path: None,
            top_publishers: DEFAULT_TOP_PUBLISHERS,
            build_on_start: false,
            budgets: Budgets::default(),
            tsi: TsiSection::default(),
            index: IndexParams::default(),
            embedder: RebuildEmbedder::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{ENV_PREFIX}{key}: cannot parse {value:?}")))
}

impl ServiceConfig {
    /// Reads the TOML file (defaults when `None`) and applies process
    /// environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_toml(&std::fs::read_to_string(p)?)?,
            None => ServiceConfig::default(),
        };
        cfg.apply_env(std::env::vars())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies `ADSTRENGTH_*` overrides; other variables are ignored.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        for (name, value) in vars {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else { continue };
            match key {
                "LISTEN" => self.listen = parse(key, &value)?,
                "POOL_PATH" => self.pool_path = Some(value.into()),
                "INDEX_PATH" => self.index_path = Some(value.into()),
                "MODEL_PATH" => self.model_path = Some(value.into()),
                "PCTR_ENDPOINT" => self.pctr_endpoint = Some(value),
                "PCTR_TABLE_PATH" => self.pctr_table_path = Some(value.into()),
                "EVENTS_PATH" => self.events_path = value.into(),
                "BLOCKLIST_PATH" => self.blocklist_path = Some(value.into()),
                "TOP_PUBLISHERS" => self.top_publishers = parse(key, &value)?,
                "BUILD_ON_START" => self.build_on_start = parse(key, &value)?,
                "PCTR_BUDGET_MS" => self.budgets.pctr_ms = parse(key, &value)?,
                "RETRIEVAL_BUDGET_MS" => self.budgets.retrieval_ms = parse(key, &value)?,
                "TOTAL_BUDGET_MS" => self.budgets.total_ms = parse(key, &value)?,
                "K" => self.tsi.k = parse(key, &value)?,
                "DELTA" => self.tsi.delta = parse(key, &value)?,
                "MIN_SIM" => self.tsi.min_sim = parse(key, &value)?,
                "EF_SEARCH" => self.index.hnsw.ef_search = parse(key, &value)?,
                "LOG" => {}
                other => log::warn!("ignoring unknown setting {ENV_PREFIX}{other}"),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let sources = [
            self.model_path.is_some(),
            self.pctr_endpoint.is_some(),
            self.pctr_table_path.is_some(),
        ]
        .iter()
        .filter(|&&s| s)
        .count();
        if sources != 1 {
            return Err(Error::Config(
                "set exactly one of model_path, pctr_endpoint, pctr_table_path".into(),
            ));
        }
        if self.budgets.pctr_ms == 0 || self.budgets.retrieval_ms == 0 || self.budgets.total_ms == 0 {
            return Err(Error::Config("budgets must be positive".into()));
        }
        if self.build_on_start && self.pool_path.is_none() {
            return Err(Error::Config("build_on_start needs pool_path".into()));
        }
        self.tsi.to_config()?;
        Ok(())
    }
}
