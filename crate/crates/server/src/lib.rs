//! HTTP service for the hpcrag assistant and benchmarking engine.
//!
//! [`AppState`] owns the engine, the crawler and the two background loops
//! (scheduled re-crawl and session cleanup); [`routes::router`] exposes it
//! as a JSON API with a server-sent-events query stream.
//!
//! ```no_run
//! # async fn demo() -> anyhow::Result<()> {
//! let config = hpcrag_server::ServiceConfig::load(None)?;
//! let state = hpcrag_server::AppState::build(config)?;
//! hpcrag_server::serve(state, async { let _ = tokio::signal::ctrl_c().await; }).await?;
//! # Ok(()) }
//! ```

pub mod config;
pub mod convert;
pub mod docs;
pub mod error;
pub mod loops;
pub mod routes;
pub mod state;

use std::future::Future;
use std::net::SocketAddr;

use anyhow::Context;

pub use config::ServiceConfig;
pub use routes::router;
pub use state::AppState;

/// Binds `state.config().listen`, starts the loops and serves until
/// `shutdown` resolves. Open streams are drained before returning.
pub async fn serve(state: AppState, shutdown: impl Future<Output = ()> + Send + 'static) -> anyhow::Result<()> {
    let addr = state.config().listen;
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("cannot listen on {addr}"))?;
    serve_on(state, listener, shutdown).await
}

/// Like [`serve`] on an already bound listener.
pub async fn serve_on(
    state: AppState,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    let local: SocketAddr = listener.local_addr()?;
    state.start_loops();
    tracing::info!(%local, "listening");
    let app = router(state.clone());
    let result = axum::serve(listener, app).with_graceful_shutdown(shutdown).await;
    state.stop_loops();
    result.context("server error")
}

/// Serves on an ephemeral loopback port in the background. For tests and
/// embedding; the loops are started as configured.
pub async fn spawn(state: AppState) -> anyhow::Result<(SocketAddr, tokio::task::JoinHandle<anyhow::Result<()>>)> {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    let handle = tokio::spawn(serve_on(state, listener, std::future::pending()));
    Ok((addr, handle))
}
