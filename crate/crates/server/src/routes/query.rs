use std::convert::Infallible;

use axum::extract::State;
use axum::http::{HeaderMap, HeaderName, HeaderValue};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::Json;
use futures::StreamExt;
use hpcrag_client::types::{
    QueryRequest, StreamDelta, StreamError, REQUEST_ID_HEADER, SESSION_ID_HEADER, SSE_DELTA, SSE_DONE, SSE_ERROR,
};
use hpcrag_core::orchestrator::{QueryEvent, QueryOptions};
use uuid::Uuid;

use crate::convert;
use crate::error::{ApiError, ApiResult, JsonBody};
use crate::state::AppState;

pub const MAX_K: usize = 50;
pub const MAX_PROMPT_CHARS: usize = 16_000;

pub fn options_from(req: &QueryRequest) -> ApiResult<QueryOptions> {
    if req.prompt.trim().is_empty() {
        return Err(ApiError::invalid("prompt must not be empty"));
    }
    if req.prompt.chars().count() > MAX_PROMPT_CHARS {
        return Err(ApiError::invalid(format!("prompt exceeds {MAX_PROMPT_CHARS} characters")));
    }
    let d = QueryOptions::default();
    let o = QueryOptions {
        k: req.k.unwrap_or(d.k),
        model: req.model.clone().filter(|m| !m.trim().is_empty()),
        use_rag: req.use_rag.unwrap_or(d.use_rag),
        evaluate: req.evaluate.unwrap_or(d.evaluate),
        temperature: req.temperature.unwrap_or(d.temperature),
        max_tokens: req.max_tokens.unwrap_or(d.max_tokens),
    };
    validate_generation(o.k, o.temperature, o.max_tokens)?;
    Ok(o)
}

pub fn validate_generation(k: usize, temperature: f32, max_tokens: u32) -> ApiResult<()> {
    if k == 0 || k > MAX_K {
        return Err(ApiError::invalid(format!("k must be between 1 and {MAX_K}, got {k}")));
    }
    if !(0.0..=2.0).contains(&temperature) {
        return Err(ApiError::invalid(format!("temperature must be in [0, 2], got {temperature}")));
    }
    if max_tokens == 0 {
        return Err(ApiError::invalid("max_tokens must be positive"));
    }
    Ok(())
}

fn id_headers(session_id: Uuid, request_id: Uuid) -> HeaderMap {
    let mut h = HeaderMap::new();
    for (name, id) in [(SESSION_ID_HEADER, session_id), (REQUEST_ID_HEADER, request_id)] {
        h.insert(
            HeaderName::from_static(name),
            HeaderValue::from_str(&id.to_string()).expect("a UUID is a valid header value"),
        );
    }
    h
}

pub async fn query(State(state): State<AppState>, JsonBody(req): JsonBody<QueryRequest>) -> ApiResult<Response> {
    let options = options_from(&req)?;
    let result = state.orchestrator().handle_query(req.session_id, &req.prompt, &options).await;
    if let Some(e) = result.errors.first() {
        return Err(ApiError::from(e));
    }
    let body = convert::query_response(&result).ok_or_else(|| ApiError::internal("pipeline produced no answer"))?;
    Ok((id_headers(body.session_id, body.request_id), Json(body)).into_response())
}

fn sse_event(name: &str, payload: &impl serde::Serialize) -> Event {
    Event::default().event(name).json_data(payload).unwrap_or_else(|e| {
        Event::default().event(SSE_ERROR).data(format!(r#"{{"code":"internal_error","message":"{e}"}}"#))
    })
}

pub async fn query_stream(State(state): State<AppState>, JsonBody(req): JsonBody<QueryRequest>) -> ApiResult<Response> {
    let options = options_from(&req)?;
    let qs = state.orchestrator().handle_query_stream(req.session_id, &req.prompt, &options).await;
    let (session_id, request_id) = (qs.session_id, qs.request_id);
    let events = qs.events.map(move |ev| -> Result<Event, Infallible> {
        Ok(match ev {
            QueryEvent::Delta(text) => sse_event(SSE_DELTA, &StreamDelta { text }),
            QueryEvent::Done(st) => match convert::query_response(&st) {
                Some(body) => sse_event(SSE_DONE, &body),
                None => sse_event(
                    SSE_ERROR,
                    &StreamError {
                        code: "internal_error".into(),
                        message: "pipeline produced no answer".into(),
                        stage: "generation".into(),
                        request_id,
                        session_id,
                    },
                ),
            },
            QueryEvent::Error(e) => sse_event(
                SSE_ERROR,
                &StreamError {
                    code: e.code.clone(),
                    message: e.message.clone(),
                    stage: convert::stage_name(e.stage).to_owned(),
                    request_id,
                    session_id,
                },
            ),
        })
    });
    let sse = Sse::new(events).keep_alive(KeepAlive::default());
    Ok((id_headers(session_id, request_id), sse).into_response())
}
