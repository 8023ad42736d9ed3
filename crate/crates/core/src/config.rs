//! The audit configuration file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::association::NormalizationMode;
use crate::embeddings::{text_embedder, word_embedder, EmbeddingCache, ProviderConfig, ProviderKind, Providers};
use crate::error::{Error, Result};
use crate::explain::PerturbConfig;
use crate::llmclient::{Persona, PromptSpec, SamplingParams};
use crate::scoring::ScoringOptions;

/// Embedding providers for the three metric roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderBindings {
    /// Static word vectors (I-WEAT).
    pub word: ProviderConfig,
    /// Mention-in-context embeddings (CEAT).
    pub contextual: ProviderConfig,
    /// Sentence embeddings (I-SEAT).
    pub sentence: ProviderConfig,
}

impl Default for ProviderBindings {
    fn default() -> Self {
        Self {
            word: ProviderConfig::deterministic(64),
            contextual: ProviderConfig::deterministic(64),
            sentence: ProviderConfig::deterministic(64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model_id: String,
    /// Chat endpoint base URL; not needed when replaying.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Overrides the top-level providers for this model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub providers: Option<ProviderBindings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub models: Vec<ModelConfig>,
    pub classes_path: PathBuf,
    pub corpus_path: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub personas: Vec<Persona>,
    #[serde(default)]
    pub prompts: Vec<PromptSpec>,
    /// Task-1 prompt texts per class id; classes without an entry get
    /// templated prompts.
    #[serde(default)]
    pub task1_prompts: BTreeMap<String, Vec<String>>,
    #[serde(default = "default_task1_per_class")]
    pub task1_prompts_per_class: usize,
    #[serde(default)]
    pub sampling: SamplingParams,
    #[serde(default)]
    pub lime: PerturbConfig,
    #[serde(default)]
    pub normalization: NormalizationMode,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub providers: ProviderBindings,
    #[serde(default)]
    pub scoring: ScoringOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_cache: Option<PathBuf>,
    /// Minimum spacing between requests to one endpoint.
    #[serde(default)]
    pub request_interval_ms: u64,
    /// Directory the relative paths above are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_task1_per_class() -> usize {
    20
}

fn default_concurrency() -> usize {
    4
}

/// Parse a config file. Unknown keys and type errors are reported with the
/// JSON path of the offending key.
pub fn parse_config(path: impl AsRef<Path>) -> Result<AuditConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut config = parse_config_str(&text)?;
    config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(config)
}

pub fn parse_config_str(text: &str) -> Result<AuditConfig> {
    let config: AuditConfig = crate::corpus::parse_json(text).map_err(|e| match e {
        Error::Schema { location, message } => Error::config(location.unwrap_or_else(|| ".".into()), message),
        other => other,
    })?;
    config.check()?;
    Ok(config)
}

impl AuditConfig {
    pub fn check(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::config("models", "at least one model is required"));
        }
        let mut seen = BTreeSet::new();
        for (i, m) in self.models.iter().enumerate() {
            if m.model_id.trim().is_empty() {
                return Err(Error::config(format!("models[{i}].model_id"), "empty model id"));
            }
            if !seen.insert(&m.model_id) {
                return Err(Error::config(format!("models[{i}].model_id"), format!("duplicate model `{}`", m.model_id)));
            }
            if let Some(p) = &m.providers {
                check_bindings(p, &format!("models[{i}].providers"))?;
            }
        }
        check_bindings(&self.providers, "providers")?;
        self.lime.check().map_err(|m| Error::config("lime", m))?;
        if self.concurrency == 0 {
            return Err(Error::config("concurrency", "must be at least 1"));
        }
        if self.sampling.n == 0 {
            return Err(Error::config("sampling.n", "must be at least 1"));
        }
        Ok(())
    }

    /// Task-2 preconditions.
    pub fn check_task2(&self) -> Result<()> {
        if self.personas.is_empty() {
            return Err(Error::config("personas", "task2 requires at least one persona"));
        }
        if self.prompts.is_empty() {
            return Err(Error::config("prompts", "task2 requires at least one prompt"));
        }
        if self.sampling.n < 2 {
            return Err(Error::config("sampling.n", "task2 needs at least 2 generations per cell for volatility"));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn bindings_for(&self, model_id: &str) -> &ProviderBindings {
        self.models
            .iter()
            .find(|m| m.model_id == model_id)
            .and_then(|m| m.providers.as_ref())
            .unwrap_or(&self.providers)
    }

    /// Instantiate the embedding providers for one model. Remote providers
    /// share the configured cache file.
    pub fn build_providers(&self, model_id: &str) -> Result<Providers> {
        let b = self.bindings_for(model_id);
        let cache = match &self.embedding_cache {
            Some(p) => Some(Arc::new(EmbeddingCache::open(self.resolve(p))?)),
            None => None,
        };
        let resolve = |c: &ProviderConfig| {
            let mut c = c.clone();
            if let Some(f) = &c.file_path {
                c.file_path = Some(self.resolve(f));
            }
            c
        };
        let key = |c: &ProviderConfig| match c.kind {
            ProviderKind::Remote => api_key_for(&c.model_id),
            _ => None,
        };
        Ok(Providers {
            word: word_embedder(&resolve(&b.word), cache.clone(), key(&b.word))?,
            contextual: text_embedder(&resolve(&b.contextual), cache.clone(), key(&b.contextual))?,
            sentence: text_embedder(&resolve(&b.sentence), cache, key(&b.sentence))?,
        })
    }
}

fn check_bindings(b: &ProviderBindings, at: &str) -> Result<()> {
    for (role, c) in [("word", &b.word), ("contextual", &b.contextual), ("sentence", &b.sentence)] {
        c.check().map_err(|m| Error::config(format!("{at}.{role}"), m))?;
    }
    for (role, c) in [("contextual", &b.contextual), ("sentence", &b.sentence)] {
        if c.kind == ProviderKind::StaticFile {
            return Err(Error::config(format!("{at}.{role}"), "static-file vectors only serve the word role"));
        }
    }
    Ok(())
}

/// `BADX_API_KEY_<MODEL_ID>` with the id uppercased and every
/// non-alphanumeric character replaced by `_`.
pub fn api_key_var(model_id: &str) -> String {
    let suffix: String = model_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
        .collect();
    format!("BADX_API_KEY_{suffix}")
}

/// The per-model key if set, else `BADX_API_KEY`.
pub fn api_key_for(model_id: &str) -> Option<String> {
    std::env::var(api_key_var(model_id))
        .or_else(|_| std::env::var("BADX_API_KEY"))
        .ok()
        .filter(|k| !k.is_empty())
}
