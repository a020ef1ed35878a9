//! Sentence embeddings of normalized text and cosine-similarity aggregates.
//!
//! Backends implement [`EmbeddingBackend`]. An [`Embedder`] wraps one with
//! the on-disk cache, retry policy, offline switch and in-flight limit.

mod mock;
mod remote;

pub use mock::MockBackend;
pub use remote::{RemoteBackend, RemoteFormat};

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::cache::{sha256_hex, CacheError, DiskCache};
use crate::exec::{parallel_map, retry, RetryPolicy};
use crate::textnorm::NormalizedText;

/// Cache namespace for embeddings.
pub const CACHE_NAMESPACE: &str = "embeddings";

/// Errors from embedding and similarity.
#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("offline: no cached embedding for {backend_id}/{text_hash}")]
    OfflineMiss {
        backend_id: String,
        text_hash: String,
    },
    #[error("nothing to embed: text is empty after normalization")]
    EmptyText,
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

impl EmbedError {
    pub fn is_transient(&self) -> bool {
        matches!(self, EmbedError::Transport(_))
    }
}

/// A semantic vector of one text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub dim: usize,
    pub backend_id: String,
}

impl EmbeddingVector {
    pub fn norm(&self) -> f64 {
        l2(&self.values)
    }
}

/// Turns a normalized text into a vector.
pub trait EmbeddingBackend: Send + Sync {
    fn backend_id(&self) -> &str;
    fn dim(&self) -> usize;
    /// Whether returned vectors have unit L2 norm.
    fn normalizes(&self) -> bool;
    /// Whether responses come from outside the process (and so are cached
    /// and forbidden when offline).
    fn is_remote(&self) -> bool;
    fn embed_text(&self, joined: &str) -> Result<Vec<f64>, EmbedError>;
}

/// How an episode's annotations are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Mean of per-annotation cosines.
    #[default]
    MeanSimilarity,
    /// Cosine against the renormalized mean annotation vector.
    MeanEmbedding,
}

impl AggregationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AggregationMode::MeanSimilarity => "mean_similarity",
            AggregationMode::MeanEmbedding => "mean_embedding",
        }
    }
}

/// Cached entry layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedEmbedding {
    pub text_hash: String,
    pub dim: usize,
    pub values: Vec<f64>,
}

/// Backend plus cache, retry and concurrency policy.
#[derive(Clone)]
pub struct Embedder {
    backend: Arc<dyn EmbeddingBackend>,
    cache: Option<DiskCache>,
    offline: bool,
    concurrency: usize,
    retry: RetryPolicy,
}

impl std::fmt::Debug for Embedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Embedder")
            .field("backend", &self.backend.backend_id())
            .field("offline", &self.offline)
            .field("concurrency", &self.concurrency)
            .finish()
    }
}

impl Embedder {
    pub fn new(backend: Arc<dyn EmbeddingBackend>) -> Self {
        Self {
            backend,
            cache: None,
            offline: false,
            concurrency: 4,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_cache(mut self, cache: DiskCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn offline(mut self, offline: bool) -> Self {
        self.offline = offline;
        self
    }

    pub fn concurrency(mut self, limit: usize) -> Self {
        self.concurrency = limit.max(1);
        self
    }

    pub fn retry_policy(mut self, policy: RetryPolicy) -> Self {
        self.retry = policy;
        self
    }

    pub fn backend(&self) -> &dyn EmbeddingBackend {
        self.backend.as_ref()
    }

    pub fn backend_id(&self) -> &str {
        self.backend.backend_id()
    }

    /// Embeds one normalized text, consulting the cache for remote backends.
    pub fn embed(&self, text: &NormalizedText) -> Result<EmbeddingVector, EmbedError> {
        let joined = text.joined.as_str();
        if joined.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let id = self.backend.backend_id().to_string();
        let dim = self.backend.dim();
        let hash = sha256_hex(joined.as_bytes());
        let cache = if self.backend.is_remote() {
            self.cache.as_ref()
        } else {
            None
        };

        if let Some(c) = cache {
            if let Some(hit) = c.get_json::<CachedEmbedding>(CACHE_NAMESPACE, &id, &hash)? {
                if hit.dim == dim && hit.values.len() == dim && hit.text_hash == hash {
                    return Ok(EmbeddingVector {
                        values: hit.values,
                        dim,
                        backend_id: id,
                    });
                }
                log::warn!("cached embedding {id}/{hash} has wrong shape; refetching");
            }
        }
        if self.offline && self.backend.is_remote() {
            return Err(EmbedError::OfflineMiss {
                backend_id: id,
                text_hash: hash,
            });
        }

        let values = retry(&self.retry, EmbedError::is_transient, |_| {
            self.backend.embed_text(joined)
        })?;
        if values.len() != dim {
            return Err(EmbedError::Protocol(format!(
                "backend {id} returned {} values, expected {dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::Protocol(format!(
                "backend {id} returned non-finite values"
            )));
        }
        if let Some(c) = cache {
            c.put_json(
                CACHE_NAMESPACE,
                &id,
                &hash,
                &CachedEmbedding {
                    text_hash: hash.clone(),
                    dim,
                    values: values.clone(),
                },
            )?;
        }
        Ok(EmbeddingVector {
            values,
            dim,
            backend_id: id,
        })
    }

    /// Cache keys (`backend/hash`) an offline run would miss; empty unless
    /// offline with a remote backend.
    pub fn offline_misses(&self, texts: &[&NormalizedText]) -> Result<Vec<String>, EmbedError> {
        if !(self.offline && self.backend.is_remote()) {
            return Ok(Vec::new());
        }
        let id = self.backend.backend_id();
        let mut out = Vec::new();
        for t in texts {
            if t.joined.trim().is_empty() {
                continue;
            }
            let hash = sha256_hex(t.joined.as_bytes());
            let hit = match &self.cache {
                Some(c) => c.get_bytes(CACHE_NAMESPACE, id, &hash)?.is_some(),
                None => false,
            };
            if !hit {
                out.push(format!("{CACHE_NAMESPACE}/{id}/{hash}"));
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// Embeds many texts with at most `concurrency` backend calls in flight.
    /// Identical texts are embedded once.
    pub fn embed_all(&self, texts: &[&NormalizedText]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut unique: Vec<&NormalizedText> = Vec::new();
        let mut index = std::collections::HashMap::new();
        let slots: Vec<usize> = texts
            .iter()
            .map(|t| {
                *index.entry(t.joined.as_str()).or_insert_with(|| {
                    unique.push(*t);
                    unique.len() - 1
                })
            })
            .collect();
        let results = parallel_map(&unique, self.concurrency, |t| self.embed(t));
        let vectors: Vec<EmbeddingVector> = results.into_iter().collect::<Result<_, _>>()?;
        Ok(slots.into_iter().map(|i| vectors[i].clone()).collect())
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine of two raw vectors, clamped to `[-1, 1]`.
pub fn cosine_values(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (na, nb) = (l2(a), l2(b));
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::Domain("cosine of a zero vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    cosine_values(&a.values, &b.values)
}

/// Scores a model vector against an episode's annotation vectors.
pub fn similarity_from_vectors(
    model: &EmbeddingVector,
    annotations: &[EmbeddingVector],
    mode: AggregationMode,
) -> Result<f64, EmbedError> {
    if annotations.is_empty() {
        return Err(EmbedError::Domain("episode has no annotations".into()));
    }
    match mode {
        AggregationMode::MeanSimilarity => {
            let mut sum = 0.0;
            for a in annotations {
                sum += cosine(model, a)?;
            }
            Ok(sum / annotations.len() as f64)
        }
        AggregationMode::MeanEmbedding => {
            let dim = model.dim;
            let mut mean = vec![0.0; dim];
            for a in annotations {
                if a.values.len() != dim {
                    return Err(EmbedError::DimMismatch {
                        left: dim,
                        right: a.values.len(),
                    });
                }
                for (m, v) in mean.iter_mut().zip(&a.values) {
                    *m += v;
                }
            }
            let n = l2(&mean);
            if n == 0.0 {
                return Err(EmbedError::Domain("mean annotation vector is zero".into()));
            }
            for m in &mut mean {
                *m /= n;
            }
            cosine_values(&model.values, &mean)
        }
    }
}

/// Embeds the model text and annotations, then aggregates per `mode`.
pub fn episode_similarity(
    embedder: &Embedder,
    model_text: &NormalizedText,
    annotations: &[NormalizedText],
    mode: AggregationMode,
) -> Result<f64, EmbedError> {
    if annotations.is_empty() {
        return Err(EmbedError::Domain("episode has no annotations".into()));
    }
    let model = embedder.embed(model_text)?;
    let refs: Vec<&NormalizedText> = annotations.iter().collect();
    let anns = embedder.embed_all(&refs)?;
    similarity_from_vectors(&model, &anns, mode)
}
