//! Chat-completions HTTP backend.
//!
//! ```text
//! POST {endpoint_url}
//! {"model", "messages": [{"role", "content"}], "temperature", "max_tokens", "stream"}
//! -> {"choices": [{"message": {"content"}, "finish_reason"}]}
//! stream: text/event-stream of `data: {"choices":[{"delta":{"content"},"finish_reason"}]}`
//!         terminated by `data: [DONE]`
//! ```
//!
//! HTTP 404, or an error body mentioning a missing model, maps to
//! [`GenerationError::UnknownModel`].

use std::time::{Duration, Instant};

use async_trait::async_trait;
use futures::stream::BoxStream;
use futures::StreamExt;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ChatBackend, ChatChunk, ChatRequest, Completion, GenerationError, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpChatConfig {
    pub endpoint_url: String,
    pub timeout_secs: f64,
}

impl Default for HttpChatConfig {
    fn default() -> Self {
        Self { endpoint_url: "http://127.0.0.1:8001/v1/chat/completions".into(), timeout_secs: 120.0 }
    }
}

pub struct HttpChatBackend {
    client: reqwest::Client,
    config: HttpChatConfig,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: Role,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f32,
    max_tokens: u32,
    stream: bool,
}

fn wire(request: &ChatRequest, stream: bool) -> WireRequest<'_> {
    WireRequest {
        model: &request.model,
        messages: request.messages.iter().map(|m| WireMessage { role: m.role, content: &m.content }).collect(),
        temperature: request.params.temperature,
        max_tokens: request.params.max_tokens,
        stream,
    }
}

fn looks_like_unknown_model(body: &str) -> bool {
    let b = body.to_lowercase();
    b.contains("model") && (b.contains("not found") || b.contains("does not exist") || b.contains("unknown"))
}

impl HttpChatBackend {
    pub fn new(config: HttpChatConfig) -> reqwest::Result<Self> {
        let client =
            reqwest::Client::builder().timeout(Duration::from_secs_f64(config.timeout_secs.max(0.001))).build()?;
        Ok(Self { client, config })
    }

    async fn send(&self, request: &ChatRequest, stream: bool) -> Result<reqwest::Response, GenerationError> {
        let start = Instant::now();
        let resp =
            self.client.post(&self.config.endpoint_url).json(&wire(request, stream)).send().await.map_err(|e| {
                if e.is_timeout() {
                    GenerationError::Timeout { after_ms: start.elapsed().as_millis(), received_chars: 0 }
                } else {
                    GenerationError::Transport(e.to_string())
                }
            })?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let body = resp.text().await.unwrap_or_default();
        if status.as_u16() == 404 || looks_like_unknown_model(&body) {
            return Err(GenerationError::UnknownModel(request.model.clone()));
        }
        Err(GenerationError::Backend { status: status.as_u16(), body: body.chars().take(300).collect() })
    }

    fn models_url(&self) -> String {
        match self.config.endpoint_url.strip_suffix("/chat/completions") {
            Some(base) => format!("{base}/models"),
            None => self.config.endpoint_url.clone(),
        }
    }
}

fn finish_reason(choice: &Value) -> Option<String> {
    choice.get("finish_reason").and_then(Value::as_str).map(str::to_owned)
}

#[async_trait]
impl ChatBackend for HttpChatBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<Completion, GenerationError> {
        let start = Instant::now();
        let resp = self.send(request, false).await?;
        let body: Value = resp.json().await.map_err(|e| {
            if e.is_timeout() {
                GenerationError::Timeout { after_ms: start.elapsed().as_millis(), received_chars: 0 }
            } else {
                GenerationError::Protocol(e.to_string())
            }
        })?;
        let choice = body
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| GenerationError::Protocol("response has no choices".into()))?;
        let text = choice
            .pointer("/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| GenerationError::Protocol("choice has no message content".into()))?;
        Ok(Completion { text: text.to_owned(), finish_reason: finish_reason(choice).unwrap_or_else(|| "stop".into()) })
    }

    async fn stream(
        &self,
        request: &ChatRequest,
    ) -> Result<BoxStream<'static, Result<ChatChunk, GenerationError>>, GenerationError> {
        let resp = self.send(request, true).await?;
        let mut bytes = resp.bytes_stream();
        let start = Instant::now();
        let s = async_stream::stream! {
            let mut buf: Vec<u8> = Vec::new();
            let mut finish: Option<String> = None;
            let mut received = 0usize;
            loop {
                let chunk = match bytes.next().await {
                    Some(Ok(c)) => c,
                    Some(Err(e)) => {
                        yield Err(if e.is_timeout() {
                            GenerationError::Timeout { after_ms: start.elapsed().as_millis(), received_chars: received }
                        } else {
                            GenerationError::Transport(e.to_string())
                        });
                        return;
                    }
                    None => break,
                };
                buf.extend_from_slice(&chunk);
                while let Some(pos) = buf.iter().position(|&b| b == b'\n') {
                    let line: Vec<u8> = buf.drain(..=pos).collect();
                    let line = String::from_utf8_lossy(&line);
                    let Some(data) = line.trim_end().strip_prefix("data:") else { continue };
                    let data = data.trim();
                    if data == "[DONE]" {
                        yield Ok(ChatChunk::Finished { finish_reason: finish.take().unwrap_or_else(|| "stop".into()) });
                        return;
                    }
                    let parsed: Value = match serde_json::from_str(data) {
                        Ok(v) => v,
                        Err(e) => {
                            yield Err(GenerationError::Protocol(format!("bad stream event: {e}")));
                            return;
                        }
                    };
                    if let Some(choice) = parsed.get("choices").and_then(|c| c.get(0)) {
                        if let Some(d) = choice.pointer("/delta/content").and_then(Value::as_str) {
                            if !d.is_empty() {
                                received += d.chars().count();
                                yield Ok(ChatChunk::Delta(d.to_owned()));
                            }
                        }
                        if let Some(r) = finish_reason(choice) {
                            finish = Some(r);
                        }
                    }
                }
            }
            // Some servers close the stream after the finish chunk without [DONE].
            if let Some(r) = finish {
                yield Ok(ChatChunk::Finished { finish_reason: r });
            }
        };
        Ok(s.boxed())
    }

    async fn probe(&self) -> Result<(), GenerationError> {
        let resp =
            self.client.get(self.models_url()).send().await.map_err(|e| GenerationError::Transport(e.to_string()))?;
        if resp.status().is_server_error() {
            return Err(GenerationError::Backend { status: resp.status().as_u16(), body: String::new() });
        }
        Ok(())
    }

    fn describe(&self) -> String {
        format!("http {}", self.config.endpoint_url)
    }
}
