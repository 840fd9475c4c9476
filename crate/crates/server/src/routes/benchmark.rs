use std::sync::Arc;

use axum::extract::State;
use axum::http::{header, HeaderName, HeaderValue};
use axum::response::{IntoResponse, Response};
use axum::Json;
use hpcrag_client::types::{BenchmarkStartRequest, BenchmarkStatus, Leaderboard, PromptInput, COMPLETED_PAIRS_HEADER};
use hpcrag_core::orchestrator::{default_prompts, leaderboard, BenchmarkPrompt, BenchmarkRun, QueryOptions};
use uuid::Uuid;

use super::query::validate_generation;
use crate::convert;
use crate::error::{ApiError, ApiResult, JsonBody, PathParam};
use crate::state::AppState;

pub const MAX_PAIRS: usize = 10_000;

/// Bare prompts are numbered `p01`, `p02`, … by position; explicit ids must be unique.
pub fn prompts_from(inputs: Option<Vec<PromptInput>>) -> ApiResult<Vec<BenchmarkPrompt>> {
    let Some(inputs) = inputs else {
        return Ok(default_prompts());
    };
    let mut out = Vec::with_capacity(inputs.len());
    for (i, input) in inputs.into_iter().enumerate() {
        let (id, text, gold_answer) = match input {
            PromptInput::Text(text) => (None, text, None),
            PromptInput::Full { id, text, gold_answer } => (id, text, gold_answer),
        };
        if text.trim().is_empty() {
            return Err(ApiError::invalid(format!("prompt {} is empty", i + 1)));
        }
        let id = id.unwrap_or_else(|| format!("p{:02}", i + 1));
        if out.iter().any(|p: &BenchmarkPrompt| p.id == id) {
            return Err(ApiError::invalid(format!("duplicate prompt id {id:?}")));
        }
        out.push(BenchmarkPrompt { id, text, gold_answer });
    }
    Ok(out)
}

/// Status with the leaderboard over exactly the pairs it counts.
fn status_of(run: &Arc<BenchmarkRun>) -> BenchmarkStatus {
    let status = run.status();
    let records = run.records();
    let board = leaderboard(&records[..status.completed_pairs.min(records.len())]);
    convert::benchmark_status(&status, &board)
}

fn run_of(state: &AppState, run_id: Uuid) -> ApiResult<Arc<BenchmarkRun>> {
    Ok(state.orchestrator().benchmarks().get(run_id)?)
}

pub async fn start(
    State(state): State<AppState>,
    JsonBody(req): JsonBody<BenchmarkStartRequest>,
) -> ApiResult<Json<BenchmarkStatus>> {
    let prompts = prompts_from(req.prompts)?;
    let mut models = Vec::with_capacity(req.models.len());
    for m in req.models {
        let m = m.trim().to_owned();
        if m.is_empty() {
            return Err(ApiError::invalid("model names must not be empty"));
        }
        if !models.contains(&m) {
            models.push(m);
        }
    }
    if prompts.len().saturating_mul(models.len()) > MAX_PAIRS {
        return Err(ApiError::invalid(format!("a run is limited to {MAX_PAIRS} pairs")));
    }
    let d = QueryOptions::default();
    let options = QueryOptions {
        k: req.k.unwrap_or(d.k),
        model: None,
        use_rag: req.use_rag.unwrap_or(d.use_rag),
        evaluate: true,
        temperature: req.temperature.unwrap_or(d.temperature),
        max_tokens: req.max_tokens.unwrap_or(d.max_tokens),
    };
    validate_generation(options.k, options.temperature, options.max_tokens)?;
    let run_id = state.orchestrator().start_benchmark(prompts, models, options)?;
    Ok(Json(status_of(&run_of(&state, run_id)?)))
}

pub async fn list(State(state): State<AppState>) -> Json<Vec<BenchmarkStatus>> {
    let mut runs: Vec<BenchmarkStatus> = state
        .orchestrator()
        .benchmarks()
        .list()
        .iter()
        .filter_map(|s| state.orchestrator().benchmarks().get(s.run_id).ok())
        .map(|r| status_of(&r))
        .collect();
    runs.sort_by(|a, b| b.started_at.cmp(&a.started_at).then(a.run_id.cmp(&b.run_id)));
    Json(runs)
}

pub async fn status(
    State(state): State<AppState>,
    PathParam(run_id): PathParam<Uuid>,
) -> ApiResult<Json<BenchmarkStatus>> {
    Ok(Json(status_of(&run_of(&state, run_id)?)))
}

pub async fn board(State(state): State<AppState>, PathParam(run_id): PathParam<Uuid>) -> ApiResult<Json<Leaderboard>> {
    let s = status_of(&run_of(&state, run_id)?);
    Ok(Json(Leaderboard {
        run_id: s.run_id,
        status: s.status,
        completed_pairs: s.completed_pairs,
        total_pairs: s.total_pairs,
        rows: s.leaderboard,
    }))
}

/// The CSV as written so far; `x-completed-pairs` is read under the same lock.
pub async fn csv(State(state): State<AppState>, PathParam(run_id): PathParam<Uuid>) -> ApiResult<Response> {
    let run = run_of(&state, run_id)?;
    let (completed, text) = run.snapshot_csv().map_err(|e| ApiError::internal(format!("reading CSV: {e}")))?;
    let headers = [
        (header::CONTENT_TYPE, HeaderValue::from_static("text/csv; charset=utf-8")),
        (HeaderName::from_static(COMPLETED_PAIRS_HEADER), HeaderValue::from(completed)),
        (
            header::CONTENT_DISPOSITION,
            HeaderValue::from_str(&format!("inline; filename=\"benchmark_{run_id}.csv\"")).expect("ASCII header"),
        ),
    ];
    Ok((headers, text).into_response())
}

/// Stops the run after the pair in flight.
pub async fn cancel(
    State(state): State<AppState>,
    PathParam(run_id): PathParam<Uuid>,
) -> ApiResult<Json<BenchmarkStatus>> {
    let run = run_of(&state, run_id)?;
    run.request_cancel();
    Ok(Json(status_of(&run)))
}
