//! Embedding vectors from an external server or a deterministic stub.
//!
//! The HTTP backend speaks the common embeddings protocol:
//!
//! ```text
//! POST {endpoint_url}
//! {"model": "...", "input": ["text", ...]}
//! -> {"data": [{"index": 0, "embedding": [f32, ...]}, ...]}
//! ```

use std::ops::Range;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text::alnum_tokens;

pub const DEFAULT_EMBEDDING_MODEL: &str = "BAAI/bge-large-en-v1.5";
pub const DEFAULT_DIMENSION: usize = 1024;
pub const DEFAULT_BATCH_SIZE: usize = 128;
/// Texts longer than this are passed through but logged.
pub const LONG_TEXT_CHARS: usize = 8192;

pub const ENV_ENDPOINT: &str = "HPCRAG_EMBEDDING_URL";
pub const ENV_MODEL: &str = "HPCRAG_EMBEDDING_MODEL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.0
    }
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding backend failed for texts {failed:?}: {message}")]
    Backend { failed: Range<usize>, message: String },
    #[error("embedding backend returned {got} vectors for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
    #[error("embedding for text {position} has dimension {got}, expected {expected}")]
    DimensionMismatch { position: usize, expected: usize, got: usize },
    #[error("embedding for text {position} contains non-finite values")]
    NonFinite { position: usize },
}

/// One backend round trip for a batch of texts.
#[async_trait]
pub trait EmbeddingBackend: Send + Sync {
    async fn embed_request(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, String>;

    fn describe(&self) -> String;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBackendConfig {
    pub endpoint_url: String,
    pub model: String,
    pub batch_size: usize,
    pub timeout_secs: f64,
    pub dimension: usize,
}

impl Default for EmbeddingBackendConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://127.0.0.1:8080/v1/embeddings".into(),
            model: DEFAULT_EMBEDDING_MODEL.into(),
            batch_size: DEFAULT_BATCH_SIZE,
            timeout_secs: 30.0,
            dimension: DEFAULT_DIMENSION,
        }
    }
}

impl EmbeddingBackendConfig {
    /// Defaults overridden by `HPCRAG_EMBEDDING_URL` / `HPCRAG_EMBEDDING_MODEL`.
    pub fn from_env() -> Self {
        let mut c = Self::default();
        if let Ok(url) = std::env::var(ENV_ENDPOINT) {
            c.endpoint_url = url;
        }
        if let Ok(model) = std::env::var(ENV_MODEL) {
            c.model = model;
        }
        c
    }
}

/// Order-preserving batching front end over an [`EmbeddingBackend`].
#[derive(Clone)]
pub struct EmbeddingClient {
    backend: Arc<dyn EmbeddingBackend>,
    batch_size: usize,
    dimension: usize,
}

impl std::fmt::Debug for EmbeddingClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddingClient")
            .field("backend", &self.backend.describe())
            .field("batch_size", &self.batch_size)
            .field("dimension", &self.dimension)
            .finish()
    }
}

impl EmbeddingClient {
    pub fn new(backend: Arc<dyn EmbeddingBackend>, batch_size: usize, dimension: usize) -> Self {
        Self { backend, batch_size: batch_size.max(1), dimension }
    }

    pub fn http(config: &EmbeddingBackendConfig) -> reqwest::Result<Self> {
        let backend = HttpEmbeddingBackend::new(config)?;
        Ok(Self::new(Arc::new(backend), config.batch_size, config.dimension))
    }

    pub fn stub(dimension: usize) -> Self {
        Self::new(Arc::new(StubEmbeddingBackend { dimension }), DEFAULT_BATCH_SIZE, dimension)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn describe(&self) -> String {
        self.backend.describe()
    }

    /// One vector per input, in input order. Inputs are sent in requests of
    /// at most `batch_size` texts; an empty input makes no request.
    pub async fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let mut out = Vec::with_capacity(texts.len());
        for (b, batch) in texts.chunks(self.batch_size).enumerate() {
            let start = b * self.batch_size;
            for (i, t) in batch.iter().enumerate() {
                if t.chars().count() > LONG_TEXT_CHARS {
                    tracing::info!(
                        position = start + i,
                        chars = t.chars().count(),
                        "long text sent to embedding backend"
                    );
                }
            }
            let vectors = self
                .backend
                .embed_request(batch)
                .await
                .map_err(|message| EmbeddingError::Backend { failed: start..start + batch.len(), message })?;
            if vectors.len() != batch.len() {
                return Err(EmbeddingError::CountMismatch { expected: batch.len(), got: vectors.len() });
            }
            for (i, v) in vectors.into_iter().enumerate() {
                if v.len() != self.dimension {
                    return Err(EmbeddingError::DimensionMismatch {
                        position: start + i,
                        expected: self.dimension,
                        got: v.len(),
                    });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(EmbeddingError::NonFinite { position: start + i });
                }
                out.push(EmbeddingVector(v));
            }
        }
        Ok(out)
    }

    pub async fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let mut v = self.embed_batch(&[text.to_owned()]).await?;
        Ok(v.pop().expect("one input, one output"))
    }

    /// Cheap liveness check.
    pub async fn probe(&self) -> Result<(), EmbeddingError> {
        self.embed("health check").await.map(|_| ())
    }
}

pub struct HttpEmbeddingBackend {
    client: reqwest::Client,
    endpoint: String,
    model: String,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f32>,
}

impl HttpEmbeddingBackend {
    pub fn new(config: &EmbeddingBackendConfig) -> reqwest::Result<Self> {
        let client =
            reqwest::Client::builder().timeout(Duration::from_secs_f64(config.timeout_secs.max(0.001))).build()?;
        Ok(Self { client, endpoint: config.endpoint_url.clone(), model: config.model.clone() })
    }
}

#[async_trait]
impl EmbeddingBackend for HttpEmbeddingBackend {
    async fn embed_request(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, String> {
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&EmbeddingRequest { model: &self.model, input: texts })
            .send()
            .await
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(format!("HTTP {}: {}", status.as_u16(), body.chars().take(200).collect::<String>()));
        }
        let mut parsed: EmbeddingResponse = resp.json().await.map_err(|e| e.to_string())?;
        if parsed.data.iter().all(|d| d.index.is_some()) {
            parsed.data.sort_by_key(|d| d.index);
        }
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }

    fn describe(&self) -> String {
        format!("http {} ({})", self.endpoint, self.model)
    }
}

/// Hashed bag-of-words embedder for hermetic tests and offline runs.
#[derive(Debug, Clone, Copy)]
pub struct StubEmbeddingBackend {
    pub dimension: usize,
}

#[async_trait]
impl EmbeddingBackend for StubEmbeddingBackend {
    async fn embed_request(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, String> {
        Ok(texts.iter().map(|t| stub_embed(t, self.dimension).into_vec()).collect())
    }

    fn describe(&self) -> String {
        format!("stub (hashed bag-of-words, d={})", self.dimension)
    }
}

/// Deterministic, order-insensitive embedding: each lowercase alphanumeric
/// token adds ±1 at a SHA-256-derived coordinate; the sum is L2-normalised.
/// Text without tokens maps to the zero vector.
pub fn stub_embed(text: &str, dimension: usize) -> EmbeddingVector {
    let mut v = vec![0.0f32; dimension];
    if dimension == 0 {
        return EmbeddingVector(v);
    }
    for token in alnum_tokens(text) {
        let h = Sha256::digest(token.as_bytes());
        let slot = u64::from_le_bytes(h[..8].try_into().expect("8 bytes")) % dimension as u64;
        let sign = if h[8] & 1 == 0 { 1.0 } else { -1.0 };
        v[slot as usize] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    EmbeddingVector(v)
}

/// Backend that always fails; stands in for an unreachable server.
#[derive(Debug, Clone, Default)]
pub struct UnavailableEmbeddingBackend;

#[async_trait]
impl EmbeddingBackend for UnavailableEmbeddingBackend {
    async fn embed_request(&self, _texts: &[String]) -> Result<Vec<Vec<f32>>, String> {
        Err("embedding backend unavailable".into())
    }

    fn describe(&self) -> String {
        "unavailable".into()
    }
}
