//! TOML run configuration: search parameters, backend endpoints, retriever
//! settings, and evaluation options, with strict validation and a stable
//! content fingerprint for reproducibility manifests.

use crate::search::{CriticMode, SearchConfig, SearchMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("missing required key: {0}")]
    MissingKey(&'static str),
    #[error("invalid value for {key}: {reason}")]
    InvalidValue { key: &'static str, reason: String },
    #[error("mode conflict: {0}")]
    ModeConflict(String),
}

/// Which completion backend a role uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Scripted,
    Http,
}

/// One backend role (generator or critic).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Script bundle path (scripted backends).
    #[serde(default)]
    pub script: Option<PathBuf>,
    /// Completion endpoint URL (http backends).
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Model identifier forwarded on the wire (http backends).
    #[serde(default)]
    pub model: Option<String>,
}

impl BackendConfig {
    fn validate(&self, role: &'static str) -> Result<(), ConfigError> {
        match self.kind {
            BackendKind::Scripted if self.script.is_none() => Err(ConfigError::InvalidValue {
                key: role,
                reason: "scripted backend requires a script path".into(),
            }),
            BackendKind::Http if self.endpoint.is_none() => Err(ConfigError::InvalidValue {
                key: role,
                reason: "http backend requires an endpoint".into(),
            }),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrieverMode {
    Sparse,
    Dense,
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrieverConfig {
    #[serde(default = "default_retriever_mode")]
    pub mode: RetrieverMode,
    /// Corpus file: JSONL with `id`, `title`, `text` per line.
    pub corpus: PathBuf,
    /// Dense retrieval endpoint (dense and hybrid modes).
    #[serde(default)]
    pub dense_endpoint: Option<String>,
}

fn default_retriever_mode() -> RetrieverMode {
    RetrieverMode::Sparse
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub dataset: Option<PathBuf>,
    pub format: String,
    pub parallelism: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            dataset: None,
            format: "normalized".into(),
            parallelism: 1,
        }
    }
}

/// Corpus assignment for the data-synthesis commands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisSection {
    pub generator_ids: Vec<String>,
    pub critic_ids: Vec<String>,
    pub tau: u8,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        SynthesisSection {
            generator_ids: Vec::new(),
            critic_ids: Vec::new(),
            tau: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(default)]
    pub search: SearchConfig,
    pub retriever: RetrieverConfig,
    pub generator: BackendConfig,
    #[serde(default)]
    pub critic: Option<BackendConfig>,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub synthesis: Option<SynthesisSection>,
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.search
            .validate()
            .map_err(|e| ConfigError::InvalidValue {
                key: "search",
                reason: e.to_string(),
            })?;
        self.generator.validate("generator")?;
        if let Some(c) = &self.critic {
            c.validate("critic")?;
        }
        if self.search.critic_mode == CriticMode::Separated {
            if self.search.mode == SearchMode::PlainGreedy {
                return Err(ConfigError::ModeConflict(
                    "plain_greedy search does not consult a critic; separated critic mode is \
                     contradictory"
                        .into(),
                ));
            }
            if self.critic.is_none() {
                return Err(ConfigError::MissingKey("critic"));
            }
        }
        if matches!(self.retriever.mode, RetrieverMode::Dense | RetrieverMode::Hybrid)
            && self.retriever.dense_endpoint.is_none()
        {
            return Err(ConfigError::MissingKey("retriever.dense_endpoint"));
        }
        self.eval
            .format
            .parse::<crate::eval::DatasetFormat>()
            .map_err(|e| ConfigError::InvalidValue {
                key: "eval.format",
                reason: e.to_string(),
            })?;
        if self.eval.parallelism == 0 {
            return Err(ConfigError::InvalidValue {
                key: "eval.parallelism",
                reason: "parallelism must be at least 1".into(),
            });
        }
        if let Some(s) = &self.synthesis {
            if !(1..=5).contains(&s.tau) {
                return Err(ConfigError::InvalidValue {
                    key: "synthesis.tau",
                    reason: "threshold must lie in 1..=5".into(),
                });
            }
            if let Some(id) = s.generator_ids.iter().find(|id| s.critic_ids.contains(id)) {
                return Err(ConfigError::InvalidValue {
                    key: "synthesis",
                    reason: format!("instance {id} appears in both corpora"),
                });
            }
        }
        Ok(())
    }

    /// Content fingerprint: SHA-256 of the canonical (serialized) form, so
    /// two files that differ only in key order or comments fingerprint
    /// identically.
    pub fn fingerprint(&self) -> String {
        let canonical =
            serde_json::to_string(self).expect("config serialization cannot fail");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn parse_config(text: &str) -> Result<EngineConfig, ConfigError> {
    let cfg: EngineConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<EngineConfig, ConfigError> {
    parse_config(&std::fs::read_to_string(path)?)
}
