//! OpenAI-compatible `/v1/embeddings` client with a write-through cache.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::cache::cache_key;
use super::{EmbeddingCache, ProviderConfig, TextEmbedder, Vector};
use crate::error::{Error, Result};
use crate::http::{join_url, HttpTransport, RetryPolicy};

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f64>,
}

pub struct RemoteEmbedder {
    config: ProviderConfig,
    cache: Arc<EmbeddingCache>,
    api_key: Option<String>,
    transport: HttpTransport,
}

impl RemoteEmbedder {
    pub fn new(config: ProviderConfig, cache: Arc<EmbeddingCache>, api_key: Option<String>) -> Self {
        Self::with_policy(config, cache, api_key, RetryPolicy::default())
    }

    pub fn with_policy(
        config: ProviderConfig,
        cache: Arc<EmbeddingCache>,
        api_key: Option<String>,
        policy: RetryPolicy,
    ) -> Self {
        Self {
            config,
            cache,
            api_key,
            transport: HttpTransport::new(policy, Duration::ZERO, Duration::from_secs(120)),
        }
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    fn key(&self, text: &str) -> String {
        cache_key("remote", &self.config.model_id, text)
    }

    fn request(&self, inputs: &[&str]) -> Result<Vec<Vector>> {
        let endpoint = self
            .config
            .endpoint
            .as_deref()
            .ok_or_else(|| Error::config("provider.endpoint", "remote provider requires endpoint"))?;
        let body = json!({ "model": self.config.model_id, "input": inputs }).to_string();
        let text = self.transport.post_json(
            &join_url(endpoint, "v1/embeddings"),
            self.api_key.as_deref(),
            &body,
            |_| {},
        )?;
        let resp: EmbeddingResponse = serde_json::from_str(&text)
            .map_err(|e| Error::Protocol(format!("embedding response: {e}")))?;
        if resp.data.len() != inputs.len() {
            return Err(Error::Protocol(format!(
                "sent {} texts, received {} vectors",
                inputs.len(),
                resp.data.len()
            )));
        }
        let mut slots: Vec<Option<Vector>> = vec![None; inputs.len()];
        for d in resp.data {
            if d.index >= inputs.len() || slots[d.index].is_some() {
                return Err(Error::Protocol(format!("bad or repeated index {}", d.index)));
            }
            if d.embedding.len() != self.config.dim {
                return Err(Error::Protocol(format!(
                    "vector {} has dim {}, expected {}",
                    d.index,
                    d.embedding.len(),
                    self.config.dim
                )));
            }
            slots[d.index] = Some(
                Vector::new(d.embedding).map_err(|e| Error::Protocol(e.to_string()))?,
            );
        }
        Ok(slots.into_iter().map(|s| s.expect("all slots filled")).collect())
    }
}

impl TextEmbedder for RemoteEmbedder {
    fn id(&self) -> String {
        self.config.provider_id()
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    /// Cached texts are served locally; the rest go out in one request,
    /// deduplicated, in first-seen order.
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vector>> {
        let keys: Vec<String> = texts.iter().map(|t| self.key(t)).collect();
        let mut found: HashMap<&str, Vector> = HashMap::new();
        let mut missing: Vec<(&str, &str)> = Vec::new();
        for (text, key) in texts.iter().zip(&keys) {
            if found.contains_key(key.as_str()) || missing.iter().any(|(k, _)| k == key) {
                continue;
            }
            match self.cache.get(key) {
                Some(v) => {
                    found.insert(key, v);
                }
                None => missing.push((key, text)),
            }
        }
        if !missing.is_empty() {
            let inputs: Vec<&str> = missing.iter().map(|(_, t)| *t).collect();
            let vectors = self.request(&inputs)?;
            for ((key, _), v) in missing.iter().zip(vectors) {
                self.cache.put(key, &v)?;
                found.insert(key, v);
            }
        }
        Ok(keys.iter().map(|k| found[k.as_str()].clone()).collect())
    }
}

/// Embed `texts` through a remote provider, order preserved.
pub fn remote_embed(texts: &[String], embedder: &RemoteEmbedder) -> Result<Vec<Vector>> {
    embedder.embed_texts(texts)
}
