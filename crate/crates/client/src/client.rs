use std::time::Duration;

use eventsource_stream::Eventsource;
use futures::stream::BoxStream;
use futures::{Stream, StreamExt};
use reqwest::{Response, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use url::Url;
use uuid::Uuid;

use crate::types::*;

pub const DEFAULT_BASE_URL: &str = "http://127.0.0.1:8000";

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid base URL: {0}")]
    BaseUrl(#[from] url::ParseError),
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("{status} {code}: {message}")]
    Api { status: u16, code: String, message: String },
    #[error("unexpected response: {0}")]
    Decode(String),
}

impl ClientError {
    /// The stable error code for API errors.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { code, .. } => Some(code),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

/// Typed client for one service instance.
#[derive(Debug, Clone)]
pub struct HpcragClient {
    base: Url,
    http: reqwest::Client,
}

async fn error_from(resp: Response) -> ClientError {
    let status = resp.status().as_u16();
    let body = resp.text().await.unwrap_or_default();
    match serde_json::from_str::<ErrorBody>(&body) {
        Ok(e) => ClientError::Api { status, code: e.error.code, message: e.error.message },
        Err(_) => ClientError::Api { status, code: "http_error".into(), message: body },
    }
}

async fn json_of<T: DeserializeOwned>(resp: Response) -> Result<T> {
    if !resp.status().is_success() {
        return Err(error_from(resp).await);
    }
    let bytes = resp.bytes().await?;
    serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
}

impl HpcragClient {
    pub fn new(base_url: &str) -> Result<Self> {
        let http = reqwest::Client::builder().connect_timeout(Duration::from_secs(10)).build()?;
        Self::with_http(base_url, http)
    }

    pub fn with_http(base_url: &str, http: reqwest::Client) -> Result<Self> {
        let mut base = Url::parse(base_url)?;
        if !base.path().ends_with('/') {
            let p = format!("{}/", base.path());
            base.set_path(&p);
        }
        Ok(Self { base, http })
    }

    pub fn base_url(&self) -> &Url {
        &self.base
    }

    fn url(&self, path: &str) -> Url {
        self.base.join(path.trim_start_matches('/')).expect("static API path")
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        json_of(self.http.get(self.url(path)).send().await?).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        json_of(self.http.post(self.url(path)).json(body).send().await?).await
    }

    pub async fn query(&self, request: &QueryRequest) -> Result<QueryResponse> {
        self.post("api/query", request).await
    }

    /// Opens `/api/query/stream`. Events arrive in generation order; the
    /// stream ends after one `Done` or `Error`.
    pub async fn query_stream(&self, request: &QueryRequest) -> Result<QueryEventStream> {
        let resp = self
            .http
            .post(self.url("api/query/stream"))
            .header(reqwest::header::ACCEPT, "text/event-stream")
            .json(request)
            .send()
            .await?;
        if !resp.status().is_success() {
            return Err(error_from(resp).await);
        }
        let header =
            |name: &str| resp.headers().get(name).and_then(|v| v.to_str().ok()).and_then(|s| Uuid::parse_str(s).ok());
        let session_id = header(SESSION_ID_HEADER);
        let request_id = header(REQUEST_ID_HEADER);
        Ok(QueryEventStream { session_id, request_id, inner: parse_sse(resp.bytes_stream()).boxed() })
    }

    pub async fn start_benchmark(&self, request: &BenchmarkStartRequest) -> Result<BenchmarkStatus> {
        self.post("api/benchmark/start", request).await
    }

    pub async fn benchmark_status(&self, run_id: Uuid) -> Result<BenchmarkStatus> {
        self.get(&format!("api/benchmark/{run_id}/status")).await
    }

    pub async fn list_benchmarks(&self) -> Result<Vec<BenchmarkStatus>> {
        self.get("api/benchmark").await
    }

    pub async fn cancel_benchmark(&self, run_id: Uuid) -> Result<BenchmarkStatus> {
        self.post(&format!("api/benchmark/{run_id}/cancel"), &serde_json::json!({})).await
    }

    pub async fn leaderboard(&self, run_id: Uuid) -> Result<Leaderboard> {
        self.get(&format!("api/benchmark/{run_id}/leaderboard")).await
    }

    pub async fn benchmark_csv(&self, run_id: Uuid) -> Result<BenchmarkCsv> {
        let resp = self.http.get(self.url(&format!("api/benchmark/{run_id}/csv"))).send().await?;
        if !resp.status().is_success() {
            return Err(error_from(resp).await);
        }
        let completed_pairs = resp
            .headers()
            .get(COMPLETED_PAIRS_HEADER)
            .and_then(|v| v.to_str().ok())
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ClientError::Decode(format!("missing {COMPLETED_PAIRS_HEADER} header")))?;
        Ok(BenchmarkCsv { completed_pairs, text: resp.text().await? })
    }

    /// Polls until the run leaves `running`.
    pub async fn wait_benchmark(&self, run_id: Uuid, every: Duration) -> Result<BenchmarkStatus> {
        loop {
            let s = self.benchmark_status(run_id).await?;
            if s.status.is_terminal() {
                return Ok(s);
            }
            tokio::time::sleep(every).await;
        }
    }

    pub async fn feedback(&self, request: &FeedbackRequest) -> Result<FeedbackResponse> {
        self.post("api/feedback", request).await
    }

    pub async fn crawl(&self, request: &CrawlRequest) -> Result<CrawlResponse> {
        self.post("api/kb/crawl", request).await
    }

    pub async fn kb_stats(&self) -> Result<KbStats> {
        self.get("api/kb/stats").await
    }

    pub async fn kb_sources(&self) -> Result<Vec<SourceEntry>> {
        self.get("api/kb/sources").await
    }

    /// All registered models; with a VRAM budget only those that fit.
    pub async fn models(&self, vram_gb: Option<f64>) -> Result<ModelList> {
        match vram_gb {
            Some(v) => self.get(&format!("api/models?vram_gb={v}")).await,
            None => self.get("api/models").await,
        }
    }

    pub async fn session(&self, id: Uuid) -> Result<SessionView> {
        self.get(&format!("api/sessions/{id}")).await
    }

    /// Health is reported with 200 even when degraded.
    pub async fn health(&self) -> Result<Health> {
        self.get("api/health").await
    }

    pub async fn config(&self) -> Result<serde_json::Value> {
        self.get("api/config").await
    }

    pub async fn api_docs(&self) -> Result<serde_json::Value> {
        self.get("api/docs").await
    }

    /// Status code of an arbitrary GET, for probes.
    pub async fn status_of(&self, path: &str) -> Result<StatusCode> {
        Ok(self.http.get(self.url(path)).send().await?.status())
    }
}

pub struct QueryEventStream {
    /// From the response headers, available before the first event.
    pub session_id: Option<Uuid>,
    pub request_id: Option<Uuid>,
    inner: BoxStream<'static, Result<StreamEvent>>,
}

impl QueryEventStream {
    pub async fn next(&mut self) -> Option<Result<StreamEvent>> {
        self.inner.next().await
    }

    /// Drains the stream: all delta texts and the terminal event.
    pub async fn collect(mut self) -> Result<(Vec<String>, Option<StreamEvent>)> {
        let mut deltas = Vec::new();
        while let Some(ev) = self.next().await {
            match ev? {
                StreamEvent::Delta(d) => deltas.push(d),
                terminal => return Ok((deltas, Some(terminal))),
            }
        }
        Ok((deltas, None))
    }
}

fn decode<T: DeserializeOwned>(data: &str) -> Result<T> {
    serde_json::from_str(data).map_err(|e| ClientError::Decode(format!("bad event payload: {e}")))
}

/// Decodes an SSE byte stream into typed events, stopping after the
/// terminal event. Unknown event types are skipped.
pub fn parse_sse<S, B, E>(bytes: S) -> impl Stream<Item = Result<StreamEvent>>
where
    S: Stream<Item = std::result::Result<B, E>> + Send + 'static,
    B: AsRef<[u8]>,
    E: std::fmt::Display + Send + 'static,
{
    let events = bytes.eventsource();
    futures::stream::unfold((Box::pin(events), false), |(mut events, done)| async move {
        if done {
            return None;
        }
        loop {
            let ev = match events.next().await? {
                Ok(ev) => ev,
                Err(e) => return Some((Err(ClientError::Decode(e.to_string())), (events, true))),
            };
            let item = match ev.event.as_str() {
                SSE_DELTA => decode::<StreamDelta>(&ev.data).map(|d| StreamEvent::Delta(d.text)),
                SSE_DONE => decode::<QueryResponse>(&ev.data).map(|r| StreamEvent::Done(Box::new(r))),
                SSE_ERROR => decode::<StreamError>(&ev.data).map(StreamEvent::Error),
                _ => continue,
            };
            let terminal = !matches!(item, Ok(StreamEvent::Delta(_)));
            return Some((item, (events, terminal)));
        }
    })
}
