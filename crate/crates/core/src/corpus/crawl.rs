//! Polite fetching of seed pages and ingestion into a chunk sink.
//!
//! Requests to one host are serialised and separated by the source's crawl
//! delay; distinct hosts are fetched concurrently. Only the seed URLs are
//! fetched (link depth 0).

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::mpsc;
use tokio::task::JoinSet;

use super::chunk::{chunk_document, ChunkingProfile, DocumentChunk};
use super::clean::{clean_html, extract_headings};
use super::sources::SourceSpec;
use crate::embedding::EmbeddingClient;
use crate::index::{RecordMetadata, VectorIndex, VectorRecord};

pub const USER_AGENT: &str =
    concat!("hpcrag-crawler/", env!("CARGO_PKG_VERSION"), " (HPC documentation indexer; polite, seed pages only)");

#[derive(Debug, Clone)]
pub struct CrawlConfig {
    pub timeout: Duration,
    pub retries: u32,
    pub user_agent: String,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        Self { timeout: Duration::from_secs(15), retries: 1, user_agent: USER_AGENT.to_owned() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlFailure {
    pub url: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct FetchedPage {
    pub url: String,
    pub html: String,
    pub text: String,
    pub headings: Vec<String>,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestionReport {
    pub pages_fetched: usize,
    pub pages_failed: usize,
    pub chunks_new: usize,
    pub chunks_skipped_duplicate: usize,
    pub errors: Vec<CrawlFailure>,
    /// Set when the sink failed and the run stopped early.
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SinkOutcome {
    pub new: usize,
    pub skipped: usize,
}

#[derive(Debug, Error)]
#[error("chunk sink failed: {0}")]
pub struct SinkError(pub String);

/// Destination for freshly cut chunks.
#[async_trait]
pub trait ChunkSink: Send + Sync {
    async fn ingest(&self, chunks: Vec<DocumentChunk>) -> Result<SinkOutcome, SinkError>;
}

/// Embeds chunks that the index has not seen yet and upserts them.
pub struct IndexSink {
    embedder: EmbeddingClient,
    index: Arc<VectorIndex>,
}

impl IndexSink {
    pub fn new(embedder: EmbeddingClient, index: Arc<VectorIndex>) -> Self {
        Self { embedder, index }
    }
}

#[async_trait]
impl ChunkSink for IndexSink {
    async fn ingest(&self, chunks: Vec<DocumentChunk>) -> Result<SinkOutcome, SinkError> {
        let total = chunks.len();
        let mut seen = std::collections::HashSet::new();
        let fresh: Vec<DocumentChunk> =
            chunks.into_iter().filter(|c| seen.insert(c.id.clone()) && !self.index.contains(&c.id)).collect();
        if fresh.is_empty() {
            return Ok(SinkOutcome { new: 0, skipped: total });
        }
        let texts: Vec<String> = fresh.iter().map(|c| c.text.clone()).collect();
        let vectors = self.embedder.embed_batch(&texts).await.map_err(|e| SinkError(e.to_string()))?;
        let records: Vec<VectorRecord> = fresh
            .into_iter()
            .zip(vectors)
            .map(|(c, v)| VectorRecord {
                id: c.id,
                vector: v.into_vec(),
                metadata: RecordMetadata { source_url: c.source_url, text: c.text, fetched_at: c.fetched_at },
            })
            .collect();
        let index = Arc::clone(&self.index);
        let new = tokio::task::spawn_blocking(move || index.upsert(records))
            .await
            .map_err(|e| SinkError(e.to_string()))?
            .map_err(|e| SinkError(e.to_string()))?;
        Ok(SinkOutcome { new, skipped: total - new })
    }
}

#[derive(Clone)]
pub struct Crawler {
    client: reqwest::Client,
    config: CrawlConfig,
}

type Outcome = (usize, Result<FetchedPage, CrawlFailure>);

impl Crawler {
    pub fn new(config: CrawlConfig) -> reqwest::Result<Self> {
        let client =
            reqwest::Client::builder().user_agent(config.user_agent.clone()).timeout(config.timeout).build()?;
        Ok(Self { client, config })
    }

    /// Fetch, clean, chunk and hand pages to `sink`. Per-URL failures are
    /// recorded and skipped; a sink failure stops the run.
    pub async fn crawl_sources(
        &self,
        sources: &[SourceSpec],
        profile: &ChunkingProfile,
        sink: &dyn ChunkSink,
    ) -> IngestionReport {
        let mut report = IngestionReport::default();
        let (mut rx, _tasks) = self.spawn_fetchers(sources);
        while let Some((_, outcome)) = rx.recv().await {
            match outcome {
                Ok(page) => {
                    report.pages_fetched += 1;
                    let chunks = chunk_document(&page.url, page.fetched_at, &page.text, profile);
                    match sink.ingest(chunks).await {
                        Ok(o) => {
                            report.chunks_new += o.new;
                            report.chunks_skipped_duplicate += o.skipped;
                        }
                        Err(e) => {
                            tracing::error!(url = %page.url, error = %e, "aborting crawl");
                            report.aborted = Some(e.to_string());
                            break;
                        }
                    }
                }
                Err(failure) => {
                    tracing::warn!(url = %failure.url, reason = %failure.reason, "page failed");
                    report.pages_failed += 1;
                    report.errors.push(failure);
                }
            }
        }
        report
    }

    /// Fetch and clean every source, returning pages in source order.
    pub async fn collect_pages(&self, sources: &[SourceSpec]) -> (Vec<FetchedPage>, Vec<CrawlFailure>) {
        let (mut rx, _tasks) = self.spawn_fetchers(sources);
        let mut outcomes = Vec::with_capacity(sources.len());
        while let Some(o) = rx.recv().await {
            outcomes.push(o);
        }
        outcomes.sort_by_key(|(i, _)| *i);
        let mut pages = Vec::new();
        let mut failures = Vec::new();
        for (_, o) in outcomes {
            match o {
                Ok(p) => pages.push(p),
                Err(f) => failures.push(f),
            }
        }
        (pages, failures)
    }

    fn spawn_fetchers(&self, sources: &[SourceSpec]) -> (mpsc::Receiver<Outcome>, JoinSet<()>) {
        let mut by_host: Vec<(String, Vec<(usize, SourceSpec)>)> = Vec::new();
        let mut slot: HashMap<String, usize> = HashMap::new();
        for (i, s) in sources.iter().enumerate() {
            let host = format!("{}:{}", s.url.host_str().unwrap_or(""), s.url.port_or_known_default().unwrap_or(0));
            let pos = *slot.entry(host.clone()).or_insert_with(|| {
                by_host.push((host, Vec::new()));
                by_host.len() - 1
            });
            by_host[pos].1.push((i, s.clone()));
        }
        let (tx, rx) = mpsc::channel(16);
        let mut tasks = JoinSet::new();
        for (_, group) in by_host {
            let tx = tx.clone();
            let this = self.clone();
            tasks.spawn(async move {
                for (n, (i, source)) in group.into_iter().enumerate() {
                    if n > 0 {
                        tokio::time::sleep(Duration::from_secs_f64(source.crawl_delay)).await;
                    }
                    let outcome = this.fetch_page(&source).await;
                    if tx.send((i, outcome)).await.is_err() {
                        return;
                    }
                }
            });
        }
        (rx, tasks)
    }

    async fn fetch_page(&self, source: &SourceSpec) -> Result<FetchedPage, CrawlFailure> {
        let url = source.url.to_string();
        let mut attempt = 0;
        loop {
            match self.get_once(&url).await {
                Ok(html) => {
                    return Ok(FetchedPage {
                        text: clean_html(&html),
                        headings: extract_headings(&html),
                        url,
                        html,
                        fetched_at: Utc::now(),
                    })
                }
                Err((reason, retryable)) => {
                    if retryable && attempt < self.config.retries {
                        attempt += 1;
                        tokio::time::sleep(Duration::from_secs_f64(source.crawl_delay)).await;
                        continue;
                    }
                    return Err(CrawlFailure { url, reason });
                }
            }
        }
    }

    async fn get_once(&self, url: &str) -> Result<String, (String, bool)> {
        let resp = self.client.get(url).send().await.map_err(|e| {
            let kind = if e.is_timeout() { "timeout" } else { "request failed" };
            (format!("{kind}: {e}"), true)
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err((format!("HTTP {}", status.as_u16()), status.is_server_error()));
        }
        resp.text().await.map_err(|e| (format!("body read failed: {e}"), true))
    }
}
