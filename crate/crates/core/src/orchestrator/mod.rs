//! Request pipeline (retrieval → generation → evaluation), sessions,
//! benchmark sweeps and the feedback loop.

mod benchmark;
mod feedback;
mod session;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use chrono::Utc;
use futures::stream::BoxStream;
use futures::StreamExt;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::evaluation::{Evaluator, MetricSet};
use crate::generation::{
    ChatMessage, GenerationClient, GenerationError, GenerationParams, GenerationResult, StreamEvent,
    DEFAULT_SYSTEM_PROMPT,
};
use crate::retrieval::{GroundingTemplate, RetrievedContext, Retriever, DEFAULT_TOP_K};
use crate::text::word_count;

pub use benchmark::{
    csv_without_timing, default_prompts, leaderboard, parse_degraded, BenchmarkError, BenchmarkManager,
    BenchmarkPrompt, BenchmarkRecord, BenchmarkRun, BenchmarkStatus, LeaderboardEntry, RunStatus, CSV_HEADER,
    CSV_SCHEMA_VERSION, DEFAULT_BENCHMARK_PROMPTS, TIMING_COLUMNS,
};
pub use feedback::{
    feedback_document, feedback_source_url, read_feedback_file, FeedbackAck, FeedbackEvent, FeedbackLoop,
    FeedbackRecord, Rating, FEEDBACK_FILE,
};
pub use session::{Session, SessionStore, Turn, DEFAULT_SESSION_TTL_MINUTES, MAX_TURNS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Retrieval,
    Generation,
    Evaluation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: Stage,
    /// Stable machine-readable code, e.g. `unknown_model`.
    pub code: String,
    pub message: String,
}

impl StageError {
    fn retrieval(e: impl std::fmt::Display) -> Self {
        Self { stage: Stage::Retrieval, code: "retrieval_failed".into(), message: e.to_string() }
    }

    fn generation(e: &GenerationError) -> Self {
        Self { stage: Stage::Generation, code: e.code().into(), message: e.to_string() }
    }
}

/// Per-request record. Stages fill fields in order; a fatal error at one
/// stage leaves the later fields empty. A retrieval failure is not fatal:
/// it is recorded in `warnings`, `context_degraded` is set and generation
/// proceeds without context.
#[derive(Debug, Clone)]
pub struct PipelineState {
    pub request_id: Uuid,
    pub session_id: Option<Uuid>,
    pub prompt: String,
    pub retrieved: RetrievedContext,
    pub generation: Option<GenerationResult>,
    pub metrics: Option<MetricSet>,
    pub errors: Vec<StageError>,
    pub warnings: Vec<StageError>,
    pub context_degraded: bool,
}

impl PipelineState {
    fn new(session_id: Option<Uuid>, prompt: &str) -> Self {
        Self {
            request_id: Uuid::new_v4(),
            session_id,
            prompt: prompt.to_owned(),
            retrieved: RetrievedContext::empty(),
            generation: None,
            metrics: None,
            errors: Vec::new(),
            warnings: Vec::new(),
            context_degraded: false,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn answer(&self) -> Option<&str> {
        self.generation.as_ref().map(|g| g.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryOptions {
    pub k: usize,
    /// Registry name; the orchestrator default when absent.
    pub model: Option<String>,
    pub use_rag: bool,
    pub evaluate: bool,
    pub temperature: f32,
    pub max_tokens: u32,
}

impl Default for QueryOptions {
    fn default() -> Self {
        let p = GenerationParams::default();
        Self {
            k: DEFAULT_TOP_K,
            model: None,
            use_rag: true,
            evaluate: false,
            temperature: p.temperature,
            max_tokens: p.max_tokens,
        }
    }
}

impl QueryOptions {
    fn params(&self) -> GenerationParams {
        GenerationParams { temperature: self.temperature, max_tokens: self.max_tokens }
    }
}

#[derive(Debug, Clone)]
pub struct OrchestratorConfig {
    pub data_dir: PathBuf,
    pub default_model: String,
    pub system_prompt: String,
    pub grounding: GroundingTemplate,
    pub history_turns: usize,
    pub history_chars: usize,
    pub session_ttl: chrono::Duration,
    /// Keep sessions in memory only.
    pub ephemeral_sessions: bool,
}

impl OrchestratorConfig {
    pub fn new(data_dir: impl Into<PathBuf>, default_model: impl Into<String>) -> Self {
        Self {
            data_dir: data_dir.into(),
            default_model: default_model.into(),
            system_prompt: DEFAULT_SYSTEM_PROMPT.trim().to_owned(),
            grounding: GroundingTemplate::default(),
            history_turns: 5,
            history_chars: 2000,
            session_ttl: chrono::Duration::minutes(DEFAULT_SESSION_TTL_MINUTES),
            ephemeral_sessions: false,
        }
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.data_dir.join("sessions")
    }

    pub fn benchmarks_dir(&self) -> PathBuf {
        self.data_dir.join("benchmarks")
    }

    pub fn feedback_path(&self) -> PathBuf {
        self.data_dir.join(FEEDBACK_FILE)
    }
}

/// Streamed query events: deltas in generation order, then exactly one of
/// `Done` or `Error`.
#[derive(Debug, Clone)]
pub enum QueryEvent {
    Delta(String),
    Done(Box<PipelineState>),
    Error(StageError),
}

pub struct QueryStream {
    pub request_id: Uuid,
    pub session_id: Uuid,
    pub retrieved: RetrievedContext,
    pub context_degraded: bool,
    pub warnings: Vec<StageError>,
    pub events: BoxStream<'static, QueryEvent>,
}

struct Inner {
    config: OrchestratorConfig,
    retriever: Retriever,
    generator: GenerationClient,
    evaluator: Evaluator,
    sessions: SessionStore,
    benchmarks: BenchmarkManager,
    feedback: FeedbackLoop,
}

#[derive(Clone)]
pub struct Orchestrator {
    inner: Arc<Inner>,
}

/// Everything prepared before generation starts.
struct Prepared {
    state: PipelineState,
    messages: Vec<ChatMessage>,
    model: String,
}

impl Orchestrator {
    pub fn new(
        config: OrchestratorConfig,
        retriever: Retriever,
        generator: GenerationClient,
        evaluator: Evaluator,
    ) -> std::io::Result<Self> {
        let sessions = if config.ephemeral_sessions {
            SessionStore::in_memory()
        } else {
            SessionStore::open(config.sessions_dir())?
        };
        let benchmarks = BenchmarkManager::new(config.benchmarks_dir());
        let feedback =
            FeedbackLoop::new(config.feedback_path(), retriever.embedder().clone(), Arc::clone(retriever.index()));
        Ok(Self { inner: Arc::new(Inner { config, retriever, generator, evaluator, sessions, benchmarks, feedback }) })
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.inner.config
    }

    pub fn retriever(&self) -> &Retriever {
        &self.inner.retriever
    }

    pub fn generator(&self) -> &GenerationClient {
        &self.inner.generator
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.inner.evaluator
    }

    pub fn sessions(&self) -> &SessionStore {
        &self.inner.sessions
    }

    pub fn benchmarks(&self) -> &BenchmarkManager {
        &self.inner.benchmarks
    }

    pub fn feedback(&self) -> &FeedbackLoop {
        &self.inner.feedback
    }

    async fn retrieve_into(&self, state: &mut PipelineState, k: usize) {
        match self.inner.retriever.retrieve(&state.prompt, k).await {
            Ok(ctx) => state.retrieved = ctx,
            Err(e) => {
                tracing::warn!(request = %state.request_id, error = %e, "retrieval failed, answering without context");
                state.warnings.push(StageError::retrieval(e));
                state.context_degraded = true;
            }
        }
    }

    fn build_messages(&self, state: &PipelineState, session: Option<Uuid>) -> Vec<ChatMessage> {
        let cfg = &self.inner.config;
        let mut messages = vec![ChatMessage::system(cfg.system_prompt.clone())];
        if let Some(id) = session {
            for turn in self.inner.sessions.history(id, cfg.history_turns, cfg.history_chars) {
                messages.push(ChatMessage::user(turn.user));
                messages.push(ChatMessage::assistant(turn.assistant));
            }
        }
        messages.push(ChatMessage::user(cfg.grounding.render(&state.retrieved.formatted_block, &state.prompt)));
        messages
    }

    async fn prepare(&self, session_id: Option<Uuid>, prompt: &str, options: &QueryOptions) -> Prepared {
        let id = self.inner.sessions.get_or_create(session_id);
        let mut state = PipelineState::new(Some(id), prompt);
        if options.use_rag {
            self.retrieve_into(&mut state, options.k).await;
        }
        let messages = self.build_messages(&state, Some(id));
        let model = options.model.clone().unwrap_or_else(|| self.inner.config.default_model.clone());
        Prepared { state, messages, model }
    }

    async fn evaluate_into(&self, state: &mut PipelineState) {
        if let Some(g) = &state.generation {
            let docs = state.retrieved.documents();
            let m =
                self.inner.evaluator.evaluate_response(&state.prompt, &g.text, &docs, g.latency_seconds, None).await;
            state.metrics = Some(m);
        }
    }

    /// Single-shot query. A new session is created when `session_id` is
    /// absent. The session gains a turn only when generation succeeds.
    pub async fn handle_query(&self, session_id: Option<Uuid>, prompt: &str, options: &QueryOptions) -> PipelineState {
        let Prepared { mut state, messages, model } = self.prepare(session_id, prompt, options).await;
        match self.inner.generator.generate(&messages, &model, options.params()).await {
            Ok(result) => {
                let id = state.session_id.expect("prepare assigns a session");
                self.inner.sessions.append(id, prompt, result.text.clone());
                state.generation = Some(result);
                if options.evaluate {
                    self.evaluate_into(&mut state).await;
                }
            }
            Err(e) => state.errors.push(StageError::generation(&e)),
        }
        state
    }

    /// Streaming query. The session is updated only when the stream
    /// completes; an error or an abandoned stream leaves it unchanged.
    pub async fn handle_query_stream(
        &self,
        session_id: Option<Uuid>,
        prompt: &str,
        options: &QueryOptions,
    ) -> QueryStream {
        let Prepared { state, messages, model } = self.prepare(session_id, prompt, options).await;
        let header = QueryStream {
            request_id: state.request_id,
            session_id: state.session_id.expect("prepare assigns a session"),
            retrieved: state.retrieved.clone(),
            context_degraded: state.context_degraded,
            warnings: state.warnings.clone(),
            events: futures::stream::empty().boxed(),
        };
        let started = self.inner.generator.generate_stream(&messages, &model, options.params()).await;
        let this = self.clone();
        let evaluate = options.evaluate;
        let events = async_stream::stream! {
            let mut state = state;
            let mut inner = match started {
                Ok(s) => s,
                Err(e) => {
                    yield QueryEvent::Error(StageError::generation(&e));
                    return;
                }
            };
            while let Some(ev) = inner.next().await {
                match ev {
                    Ok(StreamEvent::Delta(d)) => yield QueryEvent::Delta(d),
                    Ok(StreamEvent::Done(result)) => {
                        let id = state.session_id.expect("prepare assigns a session");
                        this.inner.sessions.append(id, state.prompt.clone(), result.text.clone());
                        state.generation = Some(result);
                        if evaluate {
                            this.evaluate_into(&mut state).await;
                        }
                        yield QueryEvent::Done(Box::new(state));
                        return;
                    }
                    Err(e) => {
                        yield QueryEvent::Error(StageError::generation(&e));
                        return;
                    }
                }
            }
        };
        QueryStream { events: events.boxed(), ..header }
    }

    pub async fn record_feedback(&self, event: FeedbackEvent) -> FeedbackAck {
        if let Some(id) = event.session_id {
            if self.inner.sessions.get(id).is_none() {
                tracing::warn!(session = %id, "feedback for unknown session accepted");
            }
        }
        self.inner.feedback.record(event).await
    }

    pub fn cleanup_sessions(&self, now: chrono::DateTime<Utc>) -> usize {
        let removed = self.inner.sessions.cleanup(now, self.inner.config.session_ttl);
        if removed > 0 {
            tracing::info!(removed, "expired idle sessions");
        }
        removed
    }

    /// Starts a background sweep over every (prompt, model) pair, prompt
    /// major. Returns as soon as the CSV header is written.
    pub fn start_benchmark(
        &self,
        prompts: Vec<BenchmarkPrompt>,
        models: Vec<String>,
        options: QueryOptions,
    ) -> Result<Uuid, BenchmarkError> {
        let run = self.inner.benchmarks.create(prompts, models)?;
        let run_id = run.run_id;
        let this = self.clone();
        tokio::spawn(async move {
            let outcome = this.drive_benchmark(&run, &options).await;
            match outcome {
                Ok(true) => run.finish(RunStatus::Cancelled, None),
                Ok(false) => run.finish(RunStatus::Complete, None),
                Err(e) => {
                    tracing::error!(run = %run.run_id, error = %e, "benchmark failed");
                    run.finish(RunStatus::Failed, Some(e.to_string()));
                }
            }
        });
        Ok(run_id)
    }

    /// Returns whether the run was cancelled.
    async fn drive_benchmark(&self, run: &BenchmarkRun, options: &QueryOptions) -> std::io::Result<bool> {
        for prompt in &run.prompts {
            for model in &run.models {
                if run.cancel_requested() {
                    return Ok(true);
                }
                let record = self.benchmark_pair(prompt, model, options).await;
                run.push_record(record)?;
            }
        }
        Ok(false)
    }

    /// One pair, stateless (no session). Failures become an all-degraded row.
    pub async fn benchmark_pair(
        &self,
        prompt: &BenchmarkPrompt,
        model: &str,
        options: &QueryOptions,
    ) -> BenchmarkRecord {
        let mut state = PipelineState::new(None, &prompt.text);
        if options.use_rag {
            self.retrieve_into(&mut state, options.k).await;
        }
        let messages = self.build_messages(&state, None);
        let start = Instant::now();
        match self.inner.generator.generate(&messages, model, options.params()).await {
            Ok(g) => {
                let metrics = self
                    .inner
                    .evaluator
                    .evaluate_response(
                        &prompt.text,
                        &g.text,
                        &state.retrieved.documents(),
                        g.latency_seconds,
                        prompt.gold_answer.as_deref(),
                    )
                    .await;
                BenchmarkRecord {
                    prompt_id: prompt.id.clone(),
                    model: model.to_owned(),
                    composite: metrics.composite(),
                    metrics,
                    response_words: word_count(&g.text),
                    error: None,
                }
            }
            Err(e) => {
                tracing::warn!(prompt = %prompt.id, model, error = %e, "benchmark pair failed");
                let metrics = MetricSet::all_degraded(start.elapsed().as_secs_f64());
                BenchmarkRecord {
                    prompt_id: prompt.id.clone(),
                    model: model.to_owned(),
                    composite: metrics.composite(),
                    metrics,
                    response_words: 0,
                    error: Some(e.to_string()),
                }
            }
        }
    }
}
