//! Deterministic in-process chat backend for tests and offline runs.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use futures::stream::BoxStream;
use futures::StreamExt;

use super::{ChatBackend, ChatChunk, ChatRequest, Completion, GenerationError, Role};

#[derive(Debug, Clone)]
pub enum StubReply {
    /// `"You asked: {last user message}"`
    Echo,
    Fixed(String),
    /// Per-model canned answers; models not listed fall back to echo.
    PerModel(HashMap<String, String>),
    /// Computed from the request.
    Function(ReplyFn),
}

/// Reply function for [`StubReply::Function`].
#[derive(Clone)]
pub struct ReplyFn(pub Arc<dyn Fn(&ChatRequest) -> String + Send + Sync>);

impl std::fmt::Debug for ReplyFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ReplyFn")
    }
}

#[derive(Debug, Clone)]
pub struct StubChatBackend {
    reply: StubReply,
    known_models: Option<HashSet<String>>,
    delta_count: Option<usize>,
    disconnect_after: Option<usize>,
    delay: Duration,
    unavailable: bool,
    calls: Arc<AtomicUsize>,
}

impl StubChatBackend {
    fn with_reply(reply: StubReply) -> Self {
        Self {
            reply,
            known_models: None,
            delta_count: None,
            disconnect_after: None,
            delay: Duration::ZERO,
            unavailable: false,
            calls: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn echo() -> Self {
        Self::with_reply(StubReply::Echo)
    }

    pub fn fixed(text: impl Into<String>) -> Self {
        Self::with_reply(StubReply::Fixed(text.into()))
    }

    pub fn per_model<I, K, V>(answers: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        Self::with_reply(StubReply::PerModel(answers.into_iter().map(|(k, v)| (k.into(), v.into())).collect()))
    }

    pub fn from_fn(f: impl Fn(&ChatRequest) -> String + Send + Sync + 'static) -> Self {
        Self::with_reply(StubReply::Function(ReplyFn(Arc::new(f))))
    }

    /// Reject every other model name with [`GenerationError::UnknownModel`].
    pub fn with_known_models<I: IntoIterator<Item = S>, S: Into<String>>(mut self, models: I) -> Self {
        self.known_models = Some(models.into_iter().map(Into::into).collect());
        self
    }

    /// Split streamed replies into exactly `n` deltas (one per word by default).
    pub fn with_delta_count(mut self, n: usize) -> Self {
        self.delta_count = Some(n.max(1));
        self
    }

    /// Drop the stream after `n` deltas without a finish marker.
    pub fn disconnect_after(mut self, n: usize) -> Self {
        self.disconnect_after = Some(n);
        self
    }

    /// Sleep before answering, and between streamed deltas.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    /// Fail every call as if the server were unreachable.
    pub fn unavailable(mut self) -> Self {
        self.unavailable = true;
        self
    }

    pub fn call_counter(&self) -> Arc<AtomicUsize> {
        Arc::clone(&self.calls)
    }

    fn answer(&self, request: &ChatRequest) -> Result<String, GenerationError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.unavailable {
            return Err(GenerationError::Transport("stub backend unavailable".into()));
        }
        if let Some(known) = &self.known_models {
            if !known.contains(&request.model) {
                return Err(GenerationError::UnknownModel(request.model.clone()));
            }
        }
        let echo = || {
            let last = request.messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.as_str());
            format!("You asked: {}", last.unwrap_or_default())
        };
        Ok(match &self.reply {
            StubReply::Echo => echo(),
            StubReply::Fixed(t) => t.clone(),
            StubReply::PerModel(map) => map.get(&request.model).cloned().unwrap_or_else(echo),
            StubReply::Function(f) => (f.0)(request),
        })
    }

    fn split(&self, text: &str) -> Vec<String> {
        let words: Vec<&str> = text.split_inclusive(' ').collect();
        match self.delta_count {
            None => words.into_iter().map(str::to_owned).collect(),
            Some(_) if words.is_empty() => Vec::new(),
            Some(n) => {
                let per = words.len().div_ceil(n);
                words.chunks(per.max(1)).map(|c| c.concat()).collect()
            }
        }
    }
}

#[async_trait]
impl ChatBackend for StubChatBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<Completion, GenerationError> {
        if !self.delay.is_zero() {
            tokio::time::sleep(self.delay).await;
        }
        let text = self.answer(request)?;
        Ok(Completion { text, finish_reason: "stop".into() })
    }

    async fn stream(
        &self,
        request: &ChatRequest,
    ) -> Result<BoxStream<'static, Result<ChatChunk, GenerationError>>, GenerationError> {
        let text = self.answer(request)?;
        let deltas = self.split(&text);
        let delay = self.delay;
        let disconnect_after = self.disconnect_after;
        let s = async_stream::stream! {
            for (i, d) in deltas.into_iter().enumerate() {
                if disconnect_after == Some(i) {
                    return;
                }
                if !delay.is_zero() {
                    tokio::time::sleep(delay).await;
                }
                yield Ok(ChatChunk::Delta(d));
            }
            if disconnect_after.is_none() {
                yield Ok(ChatChunk::Finished { finish_reason: "stop".into() });
            }
        };
        Ok(s.boxed())
    }

    fn describe(&self) -> String {
        "stub".into()
    }
}
