//! HTTP handlers. Paths match [`crate::docs::ENDPOINTS`].

pub mod benchmark;
pub mod kb;
pub mod query;
pub mod system;

use axum::handler::HandlerWithoutStateExt;
use axum::routing::{get, post};
use axum::{Json, Router};
use tower_http::catch_panic::CatchPanicLayer;
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

use crate::error::{method_not_allowed, not_found, panic_response};
use crate::state::AppState;

async fn docs() -> Json<serde_json::Value> {
    Json(crate::docs::openapi())
}

/// The API router, plus the dashboard build when `static_dir` is set.
pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/api/query", post(query::query))
        .route("/api/query/stream", post(query::query_stream))
        .route("/api/benchmark", get(benchmark::list))
        .route("/api/benchmark/start", post(benchmark::start))
        .route("/api/benchmark/{run_id}/status", get(benchmark::status))
        .route("/api/benchmark/{run_id}/leaderboard", get(benchmark::board))
        .route("/api/benchmark/{run_id}/csv", get(benchmark::csv))
        .route("/api/benchmark/{run_id}/cancel", post(benchmark::cancel))
        .route("/api/feedback", post(system::feedback))
        .route("/api/kb/crawl", post(kb::crawl))
        .route("/api/kb/stats", get(kb::stats))
        .route("/api/kb/sources", get(kb::sources))
        .route("/api/models", get(system::models))
        .route("/api/sessions/{session_id}", get(system::session))
        .route("/api/health", get(system::health))
        .route("/api/config", get(system::config))
        .route("/api/docs", get(docs))
        .method_not_allowed_fallback(method_not_allowed);
    let app = match state.config().static_dir.clone() {
        Some(dir) => api.fallback_service(
            ServeDir::new(dir).append_index_html_on_directories(true).not_found_service(not_found.into_service()),
        ),
        None => api.fallback(not_found),
    };
    app.layer(CatchPanicLayer::custom(panic_response)).layer(TraceLayer::new_for_http()).with_state(state)
}
