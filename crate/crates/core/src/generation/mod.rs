//! Chat-completion client with whole-response and streaming modes.

mod http;
mod registry;
mod stub;

use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use futures::stream::BoxStream;
use futures::StreamExt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpChatBackend, HttpChatConfig};
pub use registry::{ModelRegistry, ModelSpec, Precision, RegistryError, RunnableModel};
pub use stub::{ReplyFn, StubChatBackend, StubReply};

pub const DEFAULT_SYSTEM_PROMPT: &str = include_str!("../../assets/system_prompt.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f32,
    pub max_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self { temperature: 0.2, max_tokens: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub params: GenerationParams,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub finish_reason: String,
}

/// Raw stream item from a backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChatChunk {
    Delta(String),
    Finished { finish_reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub latency_seconds: f64,
    pub model_name: String,
    pub finish_reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamEvent {
    Delta(String),
    Done(GenerationResult),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GenerationError {
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("generation timed out after {after_ms} ms ({received_chars} characters received)")]
    Timeout { after_ms: u128, received_chars: usize },
    #[error("generation backend unreachable: {0}")]
    Transport(String),
    #[error("generation backend returned HTTP {status}: {body}")]
    Backend { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("stream ended unexpectedly after {deltas} deltas")]
    Disconnected { deltas: usize },
}

impl GenerationError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Self::UnknownModel(_) => "unknown_model",
            Self::Timeout { .. } => "generation_timeout",
            Self::Transport(_) => "generation_unavailable",
            Self::Backend { .. } | Self::Protocol(_) => "generation_failed",
            Self::Disconnected { .. } => "stream_disconnected",
        }
    }

    fn retryable(&self) -> bool {
        matches!(self, Self::Transport(_) | Self::Backend { status: 500..=599, .. })
    }
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn complete(&self, request: &ChatRequest) -> Result<Completion, GenerationError>;

    async fn stream(
        &self,
        request: &ChatRequest,
    ) -> Result<BoxStream<'static, Result<ChatChunk, GenerationError>>, GenerationError>;

    async fn probe(&self) -> Result<(), GenerationError> {
        Ok(())
    }

    fn describe(&self) -> String;
}

pub type GenerationStream = BoxStream<'static, Result<StreamEvent, GenerationError>>;

#[derive(Clone)]
pub struct GenerationClient {
    backend: Arc<dyn ChatBackend>,
    registry: Arc<ModelRegistry>,
}

fn latency_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64().max(1e-9)
}

impl GenerationClient {
    pub fn new(backend: Arc<dyn ChatBackend>, registry: ModelRegistry) -> Self {
        Self { backend, registry: Arc::new(registry) }
    }

    pub fn registry(&self) -> &ModelRegistry {
        &self.registry
    }

    pub fn describe(&self) -> String {
        self.backend.describe()
    }

    pub async fn probe(&self) -> Result<(), GenerationError> {
        self.backend.probe().await
    }

    /// Whole-response generation. Transport and 5xx failures are retried once;
    /// latency covers all attempts.
    pub async fn generate(
        &self,
        messages: &[ChatMessage],
        model: &str,
        params: GenerationParams,
    ) -> Result<GenerationResult, GenerationError> {
        let request = ChatRequest { model: model.to_owned(), messages: messages.to_vec(), params };
        let start = Instant::now();
        let mut result = self.backend.complete(&request).await;
        if let Err(e) = &result {
            if e.retryable() {
                tracing::warn!(model, error = %e, "retrying generation once");
                tokio::time::sleep(Duration::from_millis(200)).await;
                result = self.backend.complete(&request).await;
            }
        }
        let completion = result?;
        Ok(GenerationResult {
            text: completion.text,
            latency_seconds: latency_since(start),
            model_name: model.to_owned(),
            finish_reason: completion.finish_reason,
        })
    }

    /// Incremental generation: text deltas in order, then one `Done` carrying
    /// the concatenated text. A stream that ends without a finish marker
    /// yields `Disconnected` after the last good delta. Dropping the stream
    /// cancels the backend request.
    pub async fn generate_stream(
        &self,
        messages: &[ChatMessage],
        model: &str,
        params: GenerationParams,
    ) -> Result<GenerationStream, GenerationError> {
        let request = ChatRequest { model: model.to_owned(), messages: messages.to_vec(), params };
        let start = Instant::now();
        let mut inner = self.backend.stream(&request).await?;
        let model = model.to_owned();
        let stream = async_stream::stream! {
            let mut text = String::new();
            let mut deltas = 0usize;
            loop {
                match inner.next().await {
                    Some(Ok(ChatChunk::Delta(d))) => {
                        if d.is_empty() {
                            continue;
                        }
                        deltas += 1;
                        text.push_str(&d);
                        yield Ok(StreamEvent::Delta(d));
                    }
                    Some(Ok(ChatChunk::Finished { finish_reason })) => {
                        let result = GenerationResult {
                            text: std::mem::take(&mut text),
                            latency_seconds: latency_since(start),
                            model_name: model.clone(),
                            finish_reason,
                        };
                        yield Ok(StreamEvent::Done(result));
                        break;
                    }
                    Some(Err(e)) => {
                        yield Err(e);
                        break;
                    }
                    None => {
                        yield Err(GenerationError::Disconnected { deltas });
                        break;
                    }
                }
            }
        };
        Ok(stream.boxed())
    }
}
