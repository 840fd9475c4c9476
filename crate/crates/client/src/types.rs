//! Request and response bodies of the HTTP API.
//!
//! These are the wire format. The service builds them from its internal
//! types; the client and CLI only ever see these.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

/// `{"error": {"code": ..., "message": ...}}`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

/// Stable error codes.
pub mod codes {
    pub const INVALID_REQUEST: &str = "invalid_request";
    pub const NOT_FOUND: &str = "not_found";
    pub const UNKNOWN_MODEL: &str = "unknown_model";
    pub const GENERATION_UNAVAILABLE: &str = "generation_unavailable";
    pub const GENERATION_TIMEOUT: &str = "generation_timeout";
    pub const GENERATION_FAILED: &str = "generation_failed";
    pub const STREAM_DISCONNECTED: &str = "stream_disconnected";
    pub const CRAWL_IN_PROGRESS: &str = "crawl_in_progress";
    pub const INTERNAL: &str = "internal_error";
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<Uuid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_rag: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluate: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl QueryRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self { prompt: prompt.into(), ..Self::default() }
    }
}

/// A retrieved passage as cited under an answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub rank: usize,
    pub id: String,
    pub source_url: String,
    pub score: f32,
    pub text: String,
}

impl Source {
    /// `[Source i: url | relevance 0.87]`
    pub fn citation(&self) -> String {
        format!("[Source {}: {} | relevance {:.2}]", self.rank, self.source_url, self.score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub cosine_similarity: f64,
    pub rouge_l_f1: f64,
    pub bert_score_f1: f64,
    pub hpc_domain_score: f64,
    pub rag_relevance: f64,
    pub latency_seconds: f64,
    pub composite: f64,
    /// Metric names whose value is a placeholder because a backend failed.
    pub degraded: Vec<String>,
}

/// A non-fatal problem at one pipeline stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageIssue {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub request_id: Uuid,
    pub session_id: Uuid,
    pub answer: String,
    pub model: String,
    pub finish_reason: String,
    pub latency_s: f64,
    pub sources: Vec<Source>,
    /// Retrieval failed and the answer was generated without context.
    pub context_degraded: bool,
    pub warnings: Vec<StageIssue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
}

/// `data` of a streamed `delta` event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamDelta {
    pub text: String,
}

/// `data` of a streamed `error` event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamError {
    pub code: String,
    pub message: String,
    pub stage: String,
    pub request_id: Uuid,
    pub session_id: Uuid,
}

/// One server-sent event of `/api/query/stream`.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamEvent {
    Delta(String),
    Done(Box<QueryResponse>),
    Error(StreamError),
}

pub const SSE_DELTA: &str = "delta";
pub const SSE_DONE: &str = "done";
pub const SSE_ERROR: &str = "error";

/// A benchmark prompt: bare text, or text with an id and a gold answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PromptInput {
    Text(String),
    Full {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gold_answer: Option<String>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkStartRequest {
    /// Defaults to the shipped prompt set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<Vec<PromptInput>>,
    pub models: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_rag: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunState {
    Running,
    Complete,
    Cancelled,
    Failed,
}

impl RunState {
    pub fn is_terminal(self) -> bool {
        self != RunState::Running
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkStatus {
    pub run_id: Uuid,
    pub status: RunState,
    pub completed_pairs: usize,
    pub total_pairs: usize,
    pub models: Vec<String>,
    pub prompt_count: usize,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub error: Option<String>,
    /// Standings over the pairs completed so far.
    pub leaderboard: Vec<LeaderboardRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub model: String,
    pub pairs: usize,
    pub degraded_pairs: usize,
    pub mean_cosine: f64,
    pub mean_rouge_l: f64,
    pub mean_bert_score_f1: f64,
    pub mean_hpc_score: f64,
    pub mean_rag_relevance: f64,
    pub mean_latency_s: f64,
    pub mean_response_words: f64,
    pub mean_composite: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub run_id: Uuid,
    pub status: RunState,
    pub completed_pairs: usize,
    pub total_pairs: usize,
    pub rows: Vec<LeaderboardRow>,
}

/// CSV body plus the completed-pair count read under the same lock.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkCsv {
    pub completed_pairs: usize,
    pub text: String,
}

pub const COMPLETED_PAIRS_HEADER: &str = "x-completed-pairs";
pub const SESSION_ID_HEADER: &str = "x-session-id";
pub const REQUEST_ID_HEADER: &str = "x-request-id";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<Uuid>,
    pub prompt: String,
    pub response: String,
    /// +1 or -1.
    pub rating: i8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub accepted: bool,
    pub logged: bool,
    pub indexed: bool,
    pub queued: bool,
    pub index_entry_id: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlRequest {
    /// Crawl these URLs instead of the configured source list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub urls: Option<Vec<String>>,
    /// Only configured sources at or above this priority (`P1`..`P3`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_priority: Option<String>,
    /// Wait for the crawl and return its report.
    #[serde(default)]
    pub wait: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlError {
    pub url: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlReport {
    pub pages_fetched: usize,
    pub pages_failed: usize,
    pub chunks_new: usize,
    pub chunks_skipped_duplicate: usize,
    pub errors: Vec<CrawlError>,
    pub aborted: Option<String>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    /// `api` or `scheduled`.
    pub trigger: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrawlState {
    Started,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlResponse {
    pub status: CrawlState,
    pub sources: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<CrawlReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbStats {
    pub records: usize,
    pub dimension: usize,
    pub storage_path: Option<String>,
    pub sources: usize,
    pub crawl_in_progress: bool,
    pub last_crawl: Option<CrawlReport>,
    pub feedback_pending: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub url: String,
    pub priority: String,
    pub crawl_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub display_name: String,
    pub parameter_count_label: String,
    pub bf16_vram_gb: f64,
    pub int4_vram_gb: f64,
    pub recommended_quant: String,
    pub tier: u8,
    /// Precision the model would run at on the queried VRAM budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runnable_precision: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelList {
    pub default_model: String,
    pub models: Vec<ModelInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentHealth {
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    /// `ok` when every component is healthy, else `degraded`.
    pub status: String,
    pub version: String,
    pub uptime_s: f64,
    pub components: BTreeMap<String, ComponentHealth>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnView {
    pub user: String,
    pub assistant: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: Uuid,
    pub created_at: DateTime<Utc>,
    pub last_active: DateTime<Utc>,
    pub turns: Vec<TurnView>,
}
