mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::StreamExt;
use parking_lot::Mutex;
use serde_json::{json, Value};

use hpcrag_core::embedding::{stub_embed, EmbeddingBackendConfig, EmbeddingError};
use hpcrag_core::generation::{
    ChatMessage, GenerationClient, GenerationError, GenerationParams, HttpChatBackend, HttpChatConfig, ModelRegistry,
    StreamEvent,
};
use hpcrag_core::EmbeddingClient;

#[derive(Clone, Default)]
struct EmbedServer {
    batches: Arc<Mutex<Vec<usize>>>,
    dimension_override: Arc<Mutex<Option<usize>>>,
    reverse: bool,
}

async fn embeddings(State(s): State<EmbedServer>, Json(body): Json<Value>) -> Json<Value> {
    let input: Vec<String> = serde_json::from_value(body["input"].clone()).unwrap();
    s.batches.lock().push(input.len());
    let dim = s.dimension_override.lock().unwrap_or(32);
    let mut data: Vec<Value> = input
        .iter()
        .enumerate()
        .map(|(i, t)| json!({"index": i, "embedding": stub_embed(t, dim).into_vec(), "object": "embedding"}))
        .collect();
    if s.reverse {
        data.reverse();
    }
    Json(json!({"object": "list", "data": data, "model": body["model"]}))
}

async fn embed_server(reverse: bool) -> (EmbedServer, EmbeddingClient) {
    let state = EmbedServer { reverse, ..EmbedServer::default() };
    let app = Router::new().route("/v1/embeddings", post(embeddings)).with_state(state.clone());
    let addr = common::serve(app).await;
    let cfg = EmbeddingBackendConfig {
        endpoint_url: format!("http://{addr}/v1/embeddings"),
        dimension: 32,
        ..EmbeddingBackendConfig::default()
    };
    (state, EmbeddingClient::http(&cfg).unwrap())
}

#[tokio::test]
async fn three_hundred_texts_in_three_requests() {
    let (server, client) = embed_server(true).await;
    let texts: Vec<String> = (0..300).map(|i| format!("document number {i}")).collect();
    let vectors = client.embed_batch(&texts).await.unwrap();
    assert_eq!(*server.batches.lock(), vec![128, 128, 44]);
    assert_eq!(vectors.len(), 300);
    for (t, v) in texts.iter().zip(&vectors) {
        assert_eq!(v.as_slice(), stub_embed(t, 32).as_slice());
    }
}

#[tokio::test]
async fn empty_input_sends_nothing() {
    let (server, client) = embed_server(false).await;
    assert!(client.embed_batch(&[]).await.unwrap().is_empty());
    assert!(server.batches.lock().is_empty());
}

#[tokio::test]
async fn wrong_dimension_is_rejected() {
    let (server, client) = embed_server(false).await;
    *server.dimension_override.lock() = Some(16);
    match client.embed("x").await {
        Err(EmbeddingError::DimensionMismatch { position: 0, expected: 32, got: 16 }) => {}
        other => panic!("{other:?}"),
    }
}

#[tokio::test]
async fn unreachable_embedding_server_names_failed_range() {
    let cfg = EmbeddingBackendConfig { endpoint_url: "http://127.0.0.1:9/v1/embeddings".into(), ..Default::default() };
    let client = EmbeddingClient::http(&cfg).unwrap();
    match client.embed_batch(&["a".into(), "b".into()]).await {
        Err(EmbeddingError::Backend { failed, .. }) => assert_eq!(failed, 0..2),
        other => panic!("{other:?}"),
    }
}

#[derive(Clone, Default)]
struct ChatServer {
    calls: Arc<AtomicUsize>,
    fail_first: bool,
    last_body: Arc<Mutex<Option<Value>>>,
}

fn sse(chunks: &[&str], done: bool) -> String {
    let mut out = String::new();
    for c in chunks {
        out.push_str(&format!("data: {}\n\n", json!({"choices": [{"delta": {"content": c}, "finish_reason": null}]})));
    }
    if done {
        out.push_str(&format!("data: {}\n\n", json!({"choices": [{"delta": {}, "finish_reason": "stop"}]})));
        out.push_str("data: [DONE]\n\n");
    }
    out
}

async fn chat(State(s): State<ChatServer>, Json(body): Json<Value>) -> Response {
    let n = s.calls.fetch_add(1, Ordering::SeqCst);
    *s.last_body.lock() = Some(body.clone());
    if s.fail_first && n == 0 {
        return (StatusCode::BAD_GATEWAY, "upstream busy").into_response();
    }
    let model = body["model"].as_str().unwrap_or_default();
    if model == "missing" {
        return (StatusCode::NOT_FOUND, Json(json!({"error": {"message": "The model `missing` does not exist"}})))
            .into_response();
    }
    if body["stream"] == json!(true) {
        let text =
            if model == "cut" { sse(&["par", "tial"], false) } else { sse(&["Use ", "sbatch ", "job.sh"], true) };
        return ([(header::CONTENT_TYPE, "text/event-stream")], Body::from(text)).into_response();
    }
    Json(json!({"choices": [{"message": {"role": "assistant", "content": "Use sbatch job.sh"}, "finish_reason": "stop"}]}))
        .into_response()
}

async fn chat_server(fail_first: bool) -> (ChatServer, GenerationClient) {
    let state = ChatServer { fail_first, ..ChatServer::default() };
    let app = Router::new()
        .route("/v1/chat/completions", post(chat))
        .route("/v1/models", get(|| async { Json(json!({"data": []})) }))
        .with_state(state.clone());
    let addr = common::serve(app).await;
    let backend = HttpChatBackend::new(HttpChatConfig {
        endpoint_url: format!("http://{addr}/v1/chat/completions"),
        timeout_secs: 5.0,
    })
    .unwrap();
    (state, GenerationClient::new(Arc::new(backend), ModelRegistry::default()))
}

fn msgs() -> Vec<ChatMessage> {
    vec![ChatMessage::system("be brief"), ChatMessage::user("how do I submit?")]
}

#[tokio::test]
async fn whole_response_and_request_shape() {
    let (server, client) = chat_server(false).await;
    let params = GenerationParams { temperature: 0.1, max_tokens: 64 };
    let r = client.generate(&msgs(), "m", params).await.unwrap();
    assert_eq!(r.text, "Use sbatch job.sh");
    assert_eq!(r.finish_reason, "stop");
    assert!(r.latency_seconds > 0.0);
    let body = server.last_body.lock().clone().unwrap();
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["content"], "how do I submit?");
    assert_eq!(body["max_tokens"], 64);
    assert_eq!(body["stream"], false);
    client.probe().await.unwrap();
}

#[tokio::test]
async fn bad_gateway_retried_once() {
    let (server, client) = chat_server(true).await;
    assert!(client.generate(&msgs(), "m", GenerationParams::default()).await.is_ok());
    assert_eq!(server.calls.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn missing_model_maps_to_unknown_model() {
    let (server, client) = chat_server(false).await;
    let err = client.generate(&msgs(), "missing", GenerationParams::default()).await.unwrap_err();
    assert_eq!(err, GenerationError::UnknownModel("missing".into()));
    assert_eq!(server.calls.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn sse_stream_matches_whole_response() {
    let (_, client) = chat_server(false).await;
    let whole = client.generate(&msgs(), "m", GenerationParams::default()).await.unwrap();
    let mut s = client.generate_stream(&msgs(), "m", GenerationParams::default()).await.unwrap();
    let mut deltas = Vec::new();
    let mut done = None;
    while let Some(ev) = s.next().await {
        match ev.unwrap() {
            StreamEvent::Delta(d) => deltas.push(d),
            StreamEvent::Done(r) => done = Some(r),
        }
    }
    assert_eq!(deltas, ["Use ", "sbatch ", "job.sh"]);
    assert_eq!(deltas.concat(), whole.text);
    assert_eq!(done.unwrap().finish_reason, "stop");
}

#[tokio::test]
async fn truncated_sse_stream_reports_disconnect() {
    let (_, client) = chat_server(false).await;
    let mut s = client.generate_stream(&msgs(), "cut", GenerationParams::default()).await.unwrap();
    let mut events = Vec::new();
    while let Some(ev) = s.next().await {
        events.push(ev);
    }
    assert_eq!(events.len(), 3);
    assert_eq!(events[2], Err(GenerationError::Disconnected { deltas: 2 }));
}

#[tokio::test]
async fn unreachable_chat_server_is_transport_error() {
    let backend = HttpChatBackend::new(HttpChatConfig {
        endpoint_url: "http://127.0.0.1:9/v1/chat/completions".into(),
        timeout_secs: 2.0,
    })
    .unwrap();
    let client = GenerationClient::new(Arc::new(backend), ModelRegistry::default());
    assert!(matches!(
        client.generate(&msgs(), "m", GenerationParams::default()).await,
        Err(GenerationError::Transport(_))
    ));
    assert!(client.probe().await.is_err());
}
