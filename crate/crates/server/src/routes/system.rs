use std::collections::BTreeMap;
use std::time::Duration;

use axum::extract::State;
use axum::Json;
use chrono::Utc;
use hpcrag_client::types::{ComponentHealth, FeedbackRequest, FeedbackResponse, Health, ModelList, SessionView};
use hpcrag_core::evaluation::COMPOSITE_WEIGHTS;
use hpcrag_core::orchestrator::{FeedbackEvent, Rating};
use serde::Deserialize;
use serde_json::{json, Value};
use uuid::Uuid;

use crate::convert;
use crate::error::{ApiError, ApiResult, JsonBody, PathParam, QueryParams};
use crate::state::AppState;

pub const PROBE_TIMEOUT: Duration = Duration::from_secs(3);

pub async fn feedback(
    State(state): State<AppState>,
    JsonBody(req): JsonBody<FeedbackRequest>,
) -> ApiResult<Json<FeedbackResponse>> {
    let rating = Rating::try_from(req.rating).map_err(ApiError::invalid)?;
    if req.prompt.trim().is_empty() || req.response.trim().is_empty() {
        return Err(ApiError::invalid("prompt and response must not be empty"));
    }
    let event = FeedbackEvent {
        session_id: req.session_id,
        prompt: req.prompt,
        response: req.response,
        rating,
        timestamp: Utc::now(),
    };
    let ack = state.orchestrator().record_feedback(event).await;
    Ok(Json(FeedbackResponse {
        accepted: ack.accepted,
        logged: ack.logged,
        indexed: ack.indexed,
        queued: ack.queued,
        index_entry_id: ack.index_entry_id,
    }))
}

#[derive(Debug, Deserialize)]
pub struct ModelsQuery {
    vram_gb: Option<f64>,
}

/// The registry, or with `vram_gb` only the models that fit, largest tier first.
pub async fn models(
    State(state): State<AppState>,
    QueryParams(q): QueryParams<ModelsQuery>,
) -> ApiResult<Json<ModelList>> {
    let registry = state.orchestrator().generator().registry();
    let models = match q.vram_gb {
        Some(v) if !(v.is_finite() && v > 0.0) => {
            return Err(ApiError::invalid(format!("vram_gb must be a positive number, got {v}")))
        }
        Some(v) => registry.select_tier(v).iter().map(convert::runnable_info).collect(),
        None => registry.models().iter().map(|m| convert::model_info(m, None)).collect(),
    };
    Ok(Json(ModelList { default_model: state.orchestrator().config().default_model.clone(), models }))
}

pub async fn session(State(state): State<AppState>, PathParam(id): PathParam<Uuid>) -> ApiResult<Json<SessionView>> {
    let s =
        state.orchestrator().sessions().get(id).ok_or_else(|| ApiError::not_found(format!("unknown session {id}")))?;
    Ok(Json(convert::session_view(&s)))
}

async fn probe<E: std::fmt::Display>(
    describe: String,
    fut: impl std::future::Future<Output = Result<(), E>>,
) -> ComponentHealth {
    match tokio::time::timeout(PROBE_TIMEOUT, fut).await {
        Ok(Ok(())) => ComponentHealth { ok: true, detail: describe },
        Ok(Err(e)) => ComponentHealth { ok: false, detail: format!("{describe}: {e}") },
        Err(_) => ComponentHealth { ok: false, detail: format!("{describe}: no answer within {PROBE_TIMEOUT:?}") },
    }
}

/// Always 200; `status` is `degraded` when any component is down.
pub async fn health(State(state): State<AppState>) -> Json<Health> {
    let o = state.orchestrator();
    let embedder = o.retriever().embedder();
    let (embedding, generation) = tokio::join!(
        probe(embedder.describe(), embedder.probe()),
        probe(o.generator().describe(), o.generator().probe()),
    );
    let index = o.retriever().index();
    let mut components = BTreeMap::new();
    components.insert("embedding".to_owned(), embedding);
    components.insert("generation".to_owned(), generation);
    components.insert(
        "index".to_owned(),
        ComponentHealth { ok: true, detail: format!("{} records, dimension {}", index.len(), index.dimension()) },
    );
    components
        .insert("sessions".to_owned(), ComponentHealth { ok: true, detail: format!("{} active", o.sessions().len()) });
    let loops = state.loop_snapshots();
    let failing: Vec<&str> =
        loops.iter().filter(|l| l.last_error.is_some() && l.failures > 0).map(|l| l.name.as_str()).collect();
    components.insert(
        "background_loops".to_owned(),
        ComponentHealth {
            ok: true,
            detail: if failing.is_empty() {
                format!("{} scheduled", loops.iter().filter(|l| l.enabled).count())
            } else {
                format!("failures recorded in {}", failing.join(", "))
            },
        },
    );
    let all_ok = components.values().all(|c| c.ok);
    Json(Health {
        status: if all_ok { "ok" } else { "degraded" }.to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        uptime_s: state.uptime_s(),
        components,
    })
}

/// Effective configuration, composite weights and loop counters.
pub async fn config(State(state): State<AppState>) -> Json<Value> {
    let o = state.orchestrator();
    Json(json!({
        "service": state.config(),
        "composite_weights": COMPOSITE_WEIGHTS,
        "vocabulary_terms": o.evaluator().vocabulary().len(),
        "session_ttl_minutes": o.config().session_ttl.num_minutes(),
        "history": {"turns": o.config().history_turns, "chars": o.config().history_chars},
        "loops": state.loop_snapshots(),
    }))
}
