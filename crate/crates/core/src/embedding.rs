//! Text embedding providers.
//!
//! The offline [`HashedTrigramEmbedder`] is fully deterministic and is what
//! every test and fixture run uses. [`HttpEmbedder`] talks to an
//! OpenAI-style `/embeddings` endpoint; wrap it in [`CachedEmbedder`] so that
//! rebuilding an index does not depend on the remote service.

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding request failed: {0}")]
    Transport(String),
    #[error("embedding provider returned {got} vectors for {expected} inputs")]
    CountMismatch { expected: usize, got: usize },
    #[error("embedding provider returned dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding cache {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding configuration: {0}")]
    Config(String),
}

/// Maps text to fixed-dimension real vectors.
///
/// Identical input text must produce identical vectors for the lifetime of
/// the provider.
pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError>;

    fn embed_one(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let mut out = self.embed(&[text])?;
        out.pop().ok_or(EmbedError::CountMismatch { expected: 1, got: 0 })
    }
}

/// Scales `v` to unit length in place. Returns `false` for the zero vector,
/// which is left untouched.
pub fn normalize(v: &mut [f32]) -> bool {
    let norm = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    for x in v.iter_mut() {
        *x = (f64::from(*x) / norm) as f32;
    }
    true
}

pub const FALLBACK_DIMENSION: usize = 256;

/// Hashed character-trigram term frequencies, L2-normalized.
///
/// Text is lowercased and whitespace-collapsed, then padded with one space
/// on each side before trigrams are taken. Each trigram is hashed with
/// FNV-1a into one of [`FALLBACK_DIMENSION`] buckets. Input with no
/// trigrams maps to the first basis vector.
#[derive(Debug, Clone, Default)]
pub struct HashedTrigramEmbedder;

impl HashedTrigramEmbedder {
    pub const NAME: &'static str = "hashed-trigram-256";

    pub fn new() -> Self {
        HashedTrigramEmbedder
    }

    pub fn embed_text(text: &str) -> Vec<f32> {
        let normalized = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        let chars: Vec<char> = format!(" {normalized} ").chars().collect();

        let mut v = vec![0f32; FALLBACK_DIMENSION];
        if !normalized.is_empty() {
            let mut buf = [0u8; 12];
            for window in chars.windows(3) {
                let mut hasher = FnvHasher::default();
                for c in window {
                    hasher.write(c.encode_utf8(&mut buf).as_bytes());
                }
                v[(hasher.finish() % FALLBACK_DIMENSION as u64) as usize] += 1.0;
            }
        }
        if !normalize(&mut v) {
            v[0] = 1.0;
        }
        v
    }
}

impl Embedder for HashedTrigramEmbedder {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn dimension(&self) -> usize {
        FALLBACK_DIMENSION
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        Ok(texts.iter().map(|t| Self::embed_text(t)).collect())
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f32>,
}

/// Remote embedding endpoint speaking `{model, input}` →
/// `{data: [{embedding}]}`.
pub struct HttpEmbedder {
    name: String,
    url: String,
    api_key: Option<String>,
    model: String,
    dimension: usize,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(
        url: impl Into<String>,
        api_key: Option<String>,
        model: impl Into<String>,
        dimension: usize,
        timeout: Duration,
    ) -> Self {
        let model = model.into();
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpEmbedder {
            name: format!("http:{model}"),
            url: url.into(),
            api_key,
            model,
            dimension,
            agent,
        }
    }

    /// Reads `EMBED_API_URL`, `EMBED_API_KEY` and `EMBED_MODEL`.
    pub fn from_env(dimension: usize, timeout: Duration) -> Result<Self, EmbedError> {
        let url = std::env::var("EMBED_API_URL").map_err(|_| EmbedError::Config("EMBED_API_URL is not set".into()))?;
        let key = std::env::var("EMBED_API_KEY").ok();
        let model = std::env::var("EMBED_MODEL").unwrap_or_else(|_| "all-mpnet-base-v2".into());
        Ok(Self::new(url, key, model, dimension, timeout))
    }
}

impl Embedder for HttpEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut request = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let response: EmbeddingResponse = request
            .send_json(EmbeddingRequest {
                model: &self.model,
                input: texts,
            })
            .and_then(|mut r| r.body_mut().read_json())
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        if response.data.len() != texts.len() {
            return Err(EmbedError::CountMismatch {
                expected: texts.len(),
                got: response.data.len(),
            });
        }
        response
            .data
            .into_iter()
            .map(|d| {
                if d.embedding.len() == self.dimension {
                    Ok(d.embedding)
                } else {
                    Err(EmbedError::DimensionMismatch {
                        expected: self.dimension,
                        got: d.embedding.len(),
                    })
                }
            })
            .collect()
    }
}

/// Memoizes another provider, optionally persisting the cache as JSON so
/// that later runs never hit the inner provider for known text.
pub struct CachedEmbedder<E> {
    inner: E,
    path: Option<PathBuf>,
    cache: Mutex<BTreeMap<String, Vec<f32>>>,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    provider: String,
    dimension: usize,
    vectors: BTreeMap<String, Vec<f32>>,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn in_memory(inner: E) -> Self {
        CachedEmbedder {
            inner,
            path: None,
            cache: Mutex::new(BTreeMap::new()),
        }
    }

    /// Loads `path` if it exists; writes back after every call that misses.
    pub fn persistent(inner: E, path: impl AsRef<Path>) -> Result<Self, EmbedError> {
        let path = path.as_ref().to_path_buf();
        let cache_err = |source| EmbedError::Cache {
            path: path.clone(),
            source,
        };
        let vectors = match std::fs::read(&path) {
            Ok(bytes) => {
                let file: CacheFile =
                    serde_json::from_slice(&bytes).map_err(|e| cache_err(std::io::Error::other(e)))?;
                if file.provider != inner.name() || file.dimension != inner.dimension() {
                    return Err(EmbedError::Config(format!(
                        "cache {} was written by {} (dim {}), not {} (dim {})",
                        path.display(),
                        file.provider,
                        file.dimension,
                        inner.name(),
                        inner.dimension()
                    )));
                }
                file.vectors
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(cache_err(e)),
        };
        Ok(CachedEmbedder {
            inner,
            path: Some(path),
            cache: Mutex::new(vectors),
        })
    }

    pub fn len(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn persist(&self, vectors: &BTreeMap<String, Vec<f32>>) -> Result<(), EmbedError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let file = CacheFile {
            provider: self.inner.name().to_string(),
            dimension: self.inner.dimension(),
            vectors: vectors.clone(),
        };
        let bytes = serde_json::to_vec(&file).expect("cache serializes");
        std::fs::write(path, bytes).map_err(|source| EmbedError::Cache {
            path: path.clone(),
            source,
        })
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut cache = self.cache.lock().unwrap();
        let mut missing: Vec<&str> = texts.iter().copied().filter(|t| !cache.contains_key(*t)).collect();
        missing.sort_unstable();
        missing.dedup();
        if !missing.is_empty() {
            let fresh = self.inner.embed(&missing)?;
            if fresh.len() != missing.len() {
                return Err(EmbedError::CountMismatch {
                    expected: missing.len(),
                    got: fresh.len(),
                });
            }
            for (text, v) in missing.iter().zip(fresh) {
                cache.insert((*text).to_string(), v);
            }
            self.persist(&cache)?;
        }
        Ok(texts.iter().map(|t| cache[*t].clone()).collect())
    }
}

impl<T: Embedder + ?Sized> Embedder for std::sync::Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        (**self).embed(texts)
    }
}
