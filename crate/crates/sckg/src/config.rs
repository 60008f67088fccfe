//! Run configuration. Loaded from JSON; every field has a default.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use sckg_core::extraction::{ChunkConfig, FewShotSet, PromptConfig};
use sckg_core::graph::AliasPolicy;
use sckg_core::harvest::{default_templates, KeywordTemplate};
use sckg_core::mining::Budgets;
use sckg_core::model::sha256_hex;
use sckg_core::resolution::ResolutionConfig;
use sckg_core::verify::VerifyConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::ClockKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("unknown provider mode {0:?}; expected live, record or replay")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    Live,
    Record,
    #[default]
    Replay,
}

impl FromStr for ProviderMode {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(ProviderMode::Live),
            "record" => Ok(ProviderMode::Record),
            "replay" => Ok(ProviderMode::Replay),
            _ => Err(ConfigError::UnknownMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    pub cassette_dir: PathBuf,
    pub llm_model: String,
    pub temperature: f64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            mode: ProviderMode::Replay,
            cassette_dir: PathBuf::from("cassettes"),
            llm_model: "gpt-4o-mini".into(),
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FetchConfig {
    pub per_host_delay_ms: u64,
    pub max_bytes: usize,
    pub max_text_chars: usize,
    /// Hosts never fetched. A leading dot matches subdomains.
    pub denylist: Vec<String>,
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_ms: u64,
    pub user_agent: String,
    pub respect_robots: bool,
}

impl Default for FetchConfig {
    fn default() -> Self {
        FetchConfig {
            per_host_delay_ms: 2_000,
            max_bytes: 5 * 1024 * 1024,
            max_text_chars: 200_000,
            denylist: Vec::new(),
            retries: 2,
            backoff_ms: 500,
            timeout_ms: 20_000,
            user_agent: concat!("sckg/", env!("CARGO_PKG_VERSION")).into(),
            respect_robots: true,
        }
    }
}

/// How often the resolution and verification phases run, in iterations. 0 disables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Cadence {
    pub resolve_every: u32,
    pub verify_every: u32,
}

impl Default for Cadence {
    fn default() -> Self {
        Cadence {
            resolve_every: 1,
            verify_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seeds_path: Option<PathBuf>,
    pub templates: Vec<KeywordTemplate>,
    pub max_aliases: Option<usize>,
    pub search_limit: usize,
    pub budgets: Budgets,
    pub chunk: ChunkConfig,
    pub prompt: PromptConfig,
    pub few_shot_path: Option<PathBuf>,
    pub extraction_retries: u32,
    pub resolution: ResolutionConfig,
    pub verify: VerifyConfig,
    pub cadence: Cadence,
    /// Use the trigram embedder for embedding-match candidates.
    pub embedding_candidates: bool,
    pub fetch: FetchConfig,
    pub providers: ProviderConfig,
    pub alias_policy: AliasPolicy,
    pub clock: ClockKind,
    pub clock_start: i64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seeds_path: None,
            templates: default_templates(),
            max_aliases: None,
            search_limit: 10,
            budgets: Budgets::default(),
            chunk: ChunkConfig::default(),
            prompt: PromptConfig::default(),
            few_shot_path: None,
            extraction_retries: 2,
            resolution: ResolutionConfig::default(),
            verify: VerifyConfig::default(),
            cadence: Cadence::default(),
            embedding_candidates: true,
            fetch: FetchConfig::default(),
            providers: ProviderConfig::default(),
            alias_policy: AliasPolicy::default(),
            clock: ClockKind::Logical,
            clock_start: 1,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
                path: path.into(),
                source,
            })?;
        cfg.rebase(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Resolve relative paths against the directory holding the config file.
    pub fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let Some(p) = self.seeds_path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.few_shot_path.as_mut() {
            fix(p);
        }
        fix(&mut self.providers.cassette_dir);
    }

    pub fn few_shot(&self) -> Result<FewShotSet, ConfigError> {
        let Some(path) = &self.few_shot_path else {
            return Ok(FewShotSet::default());
        };
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.clone(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.clone(),
            source,
        })
    }

    /// Hash of everything that changes what a run produces. Budgets, provider
    /// mode and file locations are left out so a stopped run can be resumed
    /// with a larger budget or from a moved directory.
    pub fn hash(&self, few_shot: &FewShotSet) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("budgets");
            m.remove("providers");
            m.remove("seeds_path");
            m.remove("few_shot_path");
            m.insert(
                "few_shot".into(),
                serde_json::to_value(few_shot).expect("few-shot serializes"),
            );
            m.insert(
                "model".into(),
                serde_json::Value::String(self.providers.llm_model.clone()),
            );
        }
        sha256_hex(v.to_string().as_bytes())
    }
}
