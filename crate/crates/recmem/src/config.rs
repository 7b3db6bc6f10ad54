//! Engine configuration: thresholds, budgets, backend selection, mode.
//!
//! Serialized as JSON for the CLI's `--config` file and embedded in
//! snapshots so a restored engine rebuilds the same backends.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::EncoderConfig;
use crate::engine::{MemoryEngine, Mode};
use crate::error::{Error, Result};
use crate::llm::{LlmBackend, RemoteLlm, RetryConfig, StubLlm};
use crate::prompts::PromptTemplates;
use crate::query::RetrievalBudget;
use crate::subconscious::ConsolidationConfig;

/// Which completion backend to construct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LlmBackendKind {
    Stub,
    Remote,
}

/// Completion backend parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmConfig {
    pub backend: LlmBackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub retry: RetryConfig,
}

impl LlmConfig {
    pub fn stub() -> Self {
        LlmConfig {
            backend: LlmBackendKind::Stub,
            model_name: None,
            endpoint_url: None,
            retry: RetryConfig::default(),
        }
    }

    pub fn build(&self) -> Result<Box<dyn LlmBackend>> {
        match self.backend {
            LlmBackendKind::Stub => Ok(Box::new(StubLlm::new())),
            LlmBackendKind::Remote => {
                let model = self
                    .model_name
                    .clone()
                    .ok_or_else(|| Error::InvalidConfig("remote llm requires model_name".into()))?;
                let endpoint = self.endpoint_url.clone().ok_or_else(|| {
                    Error::InvalidConfig("remote llm requires endpoint_url".into())
                })?;
                Ok(Box::new(RemoteLlm::new(model, endpoint, self.retry.clone())?))
            }
        }
    }
}

/// Everything needed to build one conversation's engine.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineConfig {
    #[serde(default)]
    pub consolidation: ConsolidationConfig,
    #[serde(default)]
    pub budget: RetrievalBudget,
    #[serde(default = "default_encoder")]
    pub encoder: EncoderConfig,
    #[serde(default = "LlmConfig::stub")]
    pub llm: LlmConfig,
    #[serde(default)]
    pub mode: Mode,
    /// Directory with replacement prompt template files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_dir: Option<PathBuf>,
    /// Default output directory for `snapshot`/`ingest --out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_dir: Option<PathBuf>,
}

fn default_encoder() -> EncoderConfig {
    EncoderConfig::hashed_test(256)
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            consolidation: ConsolidationConfig::default(),
            budget: RetrievalBudget::default(),
            encoder: default_encoder(),
            llm: LlmConfig::stub(),
            mode: Mode::default(),
            prompt_dir: None,
            snapshot_dir: None,
        }
    }
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }

    pub fn templates(&self) -> Result<PromptTemplates> {
        match &self.prompt_dir {
            Some(dir) => Ok(PromptTemplates::load_dir(dir)?),
            None => Ok(PromptTemplates::default()),
        }
    }

    /// Build a fresh engine for one conversation.
    pub fn build_engine(&self, conversation_id: &str) -> Result<MemoryEngine> {
        MemoryEngine::new(
            conversation_id,
            self.encoder.build()?,
            self.llm.build()?,
            self.templates()?,
            self.consolidation,
            self.mode,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_builds_an_offline_engine() {
        let cfg = EngineConfig::default();
        assert!(cfg.build_engine("c1").is_ok());
        assert_eq!(cfg.budget.k_sem, 10);
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = EngineConfig::default();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: EngineConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.consolidation.theta_count, cfg.consolidation.theta_count);
        assert_eq!(back.mode, cfg.mode);
    }

    #[test]
    fn sparse_config_file_uses_defaults() {
        let cfg: EngineConfig =
            serde_json::from_str(r#"{"mode": "eager"}"#).unwrap();
        assert_eq!(cfg.mode, Mode::Eager);
        assert_eq!(cfg.encoder.dim, 256);
        assert_eq!(cfg.llm.backend, LlmBackendKind::Stub);
    }
}
