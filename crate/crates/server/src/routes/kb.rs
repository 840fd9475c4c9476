use axum::extract::State;
use axum::http::StatusCode;
use axum::Json;
use hpcrag_client::types::{codes, CrawlRequest, CrawlResponse, CrawlState, KbStats, SourceEntry};
use hpcrag_core::corpus::{up_to_priority, Priority};
use hpcrag_core::SourceSpec;
use url::Url;

use crate::convert;
use crate::error::{ApiError, ApiResult, JsonBody};
use crate::state::{AppState, CrawlTrigger};

fn parse_priority(s: &str) -> ApiResult<Priority> {
    serde_json::from_value(serde_json::Value::String(s.trim().to_uppercase()))
        .map_err(|_| ApiError::invalid(format!("max_priority must be P1, P2 or P3, got {s:?}")))
}

fn crawl_targets(state: &AppState, req: &CrawlRequest) -> ApiResult<Vec<SourceSpec>> {
    if let Some(urls) = &req.urls {
        if req.max_priority.is_some() {
            return Err(ApiError::invalid("give either urls or max_priority, not both"));
        }
        let mut out = Vec::with_capacity(urls.len());
        for u in urls {
            let url = Url::parse(u).map_err(|e| ApiError::invalid(format!("{u:?}: {e}")))?;
            let spec = SourceSpec::new(url, Priority::P1);
            spec.validate().map_err(|e| ApiError::invalid(e.to_string()))?;
            out.push(spec);
        }
        if out.is_empty() {
            return Err(ApiError::invalid("urls must not be empty"));
        }
        return Ok(out);
    }
    Ok(match &req.max_priority {
        Some(p) => up_to_priority(state.sources(), parse_priority(p)?),
        None => state.sources().to_vec(),
    })
}

/// Starts a crawl in the background, or runs it to completion with `wait`.
pub async fn crawl(
    State(state): State<AppState>,
    JsonBody(req): JsonBody<CrawlRequest>,
) -> ApiResult<(StatusCode, Json<CrawlResponse>)> {
    let targets = crawl_targets(&state, &req)?;
    let permit = state
        .try_crawl_permit()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, codes::CRAWL_IN_PROGRESS, "a crawl is already running"))?;
    let n = targets.len();
    if req.wait {
        let report = state.run_crawl(permit, &targets, CrawlTrigger::Api).await;
        return Ok((
            StatusCode::OK,
            Json(CrawlResponse { status: CrawlState::Completed, sources: n, report: Some(report) }),
        ));
    }
    let s = state.clone();
    tokio::spawn(async move {
        s.run_crawl(permit, &targets, CrawlTrigger::Api).await;
    });
    Ok((StatusCode::ACCEPTED, Json(CrawlResponse { status: CrawlState::Started, sources: n, report: None })))
}

pub async fn stats(State(state): State<AppState>) -> Json<KbStats> {
    let index = state.orchestrator().retriever().index();
    Json(KbStats {
        records: index.len(),
        dimension: index.dimension(),
        storage_path: index.config().storage_path.as_ref().map(|p| p.display().to_string()),
        sources: state.sources().len(),
        crawl_in_progress: state.crawl_in_progress(),
        last_crawl: state.last_crawl(),
        feedback_pending: state.orchestrator().feedback().pending_len(),
    })
}

pub async fn sources(State(state): State<AppState>) -> Json<Vec<SourceEntry>> {
    Json(state.sources().iter().map(convert::source_entry).collect())
}
