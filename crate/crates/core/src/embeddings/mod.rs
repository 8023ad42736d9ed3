//! Embedding vectors and the three interchangeable providers: static vector
//! files, a remote embedding endpoint and the offline deterministic embedder.

mod cache;
mod deterministic;
mod remote;
mod wordvec;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{self, CharSpan};

pub use cache::{CacheEntry, EmbeddingCache};
pub use deterministic::{deterministic_embed, DeterministicEmbedder};
pub use remote::{remote_embed, RemoteEmbedder};
pub use wordvec::{parse_word_vectors, read_word_vectors, serialize_word_vectors, StaticVectors};

/// A finite, non-empty vector of f64 components.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidDim(0));
        }
        if let Some(i) = components.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|c| c * alpha).collect())
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Vector").field(&self.0).finish()
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Vector::new(v)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(u: &Vector, v: &Vector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimMismatch {
            expected: u.dim(),
            found: v.dim(),
            line: None,
        });
    }
    let nu = u.norm();
    let nv = v.norm();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    StaticFile,
    Remote,
    Deterministic,
}

impl ProviderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::StaticFile => "static-file",
            ProviderKind::Remote => "remote",
            ProviderKind::Deterministic => "deterministic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_path: Option<PathBuf>,
}

impl ProviderConfig {
    pub fn deterministic(dim: usize) -> Self {
        Self {
            kind: ProviderKind::Deterministic,
            model_id: format!("fnv-splitmix-{dim}"),
            endpoint: None,
            dim,
            file_path: None,
        }
    }

    /// Returns a description of the first violated invariant, if any.
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.dim == 0 {
            return Err("dim must be positive".into());
        }
        match self.kind {
            ProviderKind::StaticFile if self.file_path.is_none() => {
                Err("static-file provider requires file_path".into())
            }
            ProviderKind::Remote if self.endpoint.is_none() => {
                Err("remote provider requires endpoint".into())
            }
            ProviderKind::Deterministic if self.dim < 2 => {
                Err("deterministic provider requires dim >= 2".into())
            }
            _ => Ok(()),
        }
    }

    /// Identifier used in cache keys and run metadata.
    pub fn provider_id(&self) -> String {
        format!("{}/{}", self.kind.as_str(), self.model_id)
    }
}

/// Embeds whole texts (sentences, context windows).
pub trait TextEmbedder: Send + Sync {
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vector>>;

    fn embed_text(&self, text: &str) -> Result<Vector> {
        let mut v = self.embed_texts(&[text.to_string()])?;
        v.pop()
            .ok_or_else(|| Error::Protocol("provider returned no vector".into()))
    }
}

/// Looks up a vector for a single lexicon term; `None` means out of vocabulary.
pub trait WordEmbedder: Send + Sync {
    fn id(&self) -> String;
    fn word_vector(&self, term: &str) -> Result<Option<Vector>>;
}

/// Remote and deterministic text providers can serve word lookups by
/// embedding the bare term.
pub struct TextAsWord(pub Arc<dyn TextEmbedder>);

impl WordEmbedder for TextAsWord {
    fn id(&self) -> String {
        self.0.id()
    }

    fn word_vector(&self, term: &str) -> Result<Option<Vector>> {
        self.0.embed_text(term).map(Some)
    }
}

/// The three embedding roles consumed by the association metrics.
#[derive(Clone)]
pub struct Providers {
    /// Static word vectors (I-WEAT).
    pub word: Arc<dyn WordEmbedder>,
    /// Mention-in-context embeddings (CEAT).
    pub contextual: Arc<dyn TextEmbedder>,
    /// Sentence embeddings (I-SEAT).
    pub sentence: Arc<dyn TextEmbedder>,
}

impl Providers {
    /// All three roles served by the deterministic embedder.
    pub fn deterministic(dim: usize) -> Self {
        let det: Arc<dyn TextEmbedder> = Arc::new(DeterministicEmbedder::new(dim));
        Self {
            word: Arc::new(TextAsWord(det.clone())),
            contextual: det.clone(),
            sentence: det,
        }
    }
}

/// Build a text embedder for one provider config.
pub fn text_embedder(
    config: &ProviderConfig,
    cache: Option<Arc<EmbeddingCache>>,
    api_key: Option<String>,
) -> Result<Arc<dyn TextEmbedder>> {
    config
        .check()
        .map_err(|m| Error::config("provider", m))?;
    Ok(match config.kind {
        ProviderKind::Deterministic => Arc::new(DeterministicEmbedder::new(config.dim)),
        ProviderKind::Remote => Arc::new(RemoteEmbedder::new(
            config.clone(),
            cache.unwrap_or_else(|| Arc::new(EmbeddingCache::in_memory())),
            api_key,
        )),
        ProviderKind::StaticFile => {
            return Err(Error::config(
                "provider.kind",
                "static-file vectors can only serve the word role",
            ))
        }
    })
}

/// Build a word embedder for one provider config.
pub fn word_embedder(
    config: &ProviderConfig,
    cache: Option<Arc<EmbeddingCache>>,
    api_key: Option<String>,
) -> Result<Arc<dyn WordEmbedder>> {
    config
        .check()
        .map_err(|m| Error::config("provider", m))?;
    match config.kind {
        ProviderKind::StaticFile => {
            let path = config.file_path.as_ref().expect("checked");
            let vectors = read_word_vectors(path, Some(config.dim))?;
            Ok(Arc::new(vectors.with_id(config.provider_id())))
        }
        _ => Ok(Arc::new(TextAsWord(text_embedder(config, cache, api_key)?))),
    }
}

/// Embedding of the mention at `span`, taken as the embedding of the sentence
/// window that contains it.
pub fn mention_embed(text: &str, span: CharSpan, provider: &dyn TextEmbedder) -> Result<Vector> {
    let window = text::sentence_window(text, span)?;
    provider.embed_text(text::slice(text, window)?)
}

/// Sentence-window strings for several spans of the same text.
pub fn mention_windows(text: &str, spans: &[CharSpan]) -> Result<Vec<(CharSpan, String)>> {
    spans
        .iter()
        .map(|s| {
            let w = text::sentence_window(text, *s)?;
            Ok((w, text::slice(text, w)?.to_string()))
        })
        .collect()
}
