mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::Html;
use axum::routing::get;
use axum::Router;
use parking_lot::Mutex;

use hpcrag_core::corpus::{
    ChunkSink, ChunkingProfile, CrawlConfig, Crawler, DocumentChunk, IndexSink, Priority, SinkError, SinkOutcome,
    SourceSpec,
};
use hpcrag_core::index::{IndexConfig, VectorIndex};
use hpcrag_core::EmbeddingClient;

#[derive(Clone, Default)]
struct Site {
    hits: Arc<Mutex<Vec<(String, Instant)>>>,
    flaky_calls: Arc<AtomicUsize>,
}

async fn page(State(site): State<Site>, Path(name): Path<String>) -> Result<Html<String>, StatusCode> {
    site.hits.lock().push((name.clone(), Instant::now()));
    let n: u64 = match name.as_str() {
        "slurm" => 1,
        "storage" => 2,
        "gpus" => 3,
        "flaky" => {
            if site.flaky_calls.fetch_add(1, Ordering::SeqCst) == 0 {
                return Err(StatusCode::SERVICE_UNAVAILABLE);
            }
            4
        }
        _ => return Err(StatusCode::NOT_FOUND),
    };
    Ok(Html(common::fixture_html(&format!("Guide {name}"), &common::body_text(n, 700))))
}

async fn site() -> (String, Site) {
    let site = Site::default();
    let app = Router::new().route("/docs/{name}", get(page)).with_state(site.clone());
    let addr = common::serve(app).await;
    (format!("http://{addr}"), site)
}

fn sources(base: &str, names: &[&str], delay: f64) -> Vec<SourceSpec> {
    names
        .iter()
        .map(|n| SourceSpec {
            crawl_delay: delay,
            ..SourceSpec::new(format!("{base}/docs/{n}").parse().unwrap(), Priority::P1)
        })
        .collect()
}

fn crawler() -> Crawler {
    Crawler::new(CrawlConfig { timeout: Duration::from_secs(5), ..CrawlConfig::default() }).unwrap()
}

#[tokio::test]
async fn second_crawl_adds_nothing() {
    let (base, _) = site().await;
    let dir = tempfile::tempdir().unwrap();
    let index = Arc::new(
        VectorIndex::open(IndexConfig { storage_path: Some(dir.path().into()), ..IndexConfig::with_dimension(128) })
            .unwrap(),
    );
    let sink = IndexSink::new(EmbeddingClient::stub(128), Arc::clone(&index));
    let src = sources(&base, &["slurm", "storage", "gpus", "missing"], 0.0);

    let first = crawler().crawl_sources(&src, &ChunkingProfile::KNOWLEDGE_BASE, &sink).await;
    assert_eq!((first.pages_fetched, first.pages_failed), (3, 1));
    assert_eq!(first.errors[0].reason, "HTTP 404");
    // Heading plus 700 body words: windows [0,512) and [448,702).
    assert_eq!(first.chunks_new, 6);
    assert_eq!(index.len(), 6);

    let second = crawler().crawl_sources(&src, &ChunkingProfile::KNOWLEDGE_BASE, &sink).await;
    assert_eq!(second.chunks_new, 0);
    assert_eq!(second.chunks_skipped_duplicate, 6);
    assert_eq!(index.len(), 6);

    let reopened = VectorIndex::load(dir.path()).unwrap();
    assert_eq!(reopened.len(), 6);
    let all = reopened.brute_force_knn(&[1.0f32; 128], 6).unwrap();
    assert_eq!(all.len(), 6);
    for hit in all {
        let text = &hit.record.metadata.text;
        assert!(!text.contains("NAVIGATION") && !text.contains("FOOTER") && !text.contains("tracking"));
        assert!(text.starts_with("Guide ") || text.split_whitespace().count() == 254);
    }
}

#[tokio::test]
async fn same_host_requests_are_spaced() {
    let (base, site) = site().await;
    let (pages, failures) = crawler().collect_pages(&sources(&base, &["slurm", "storage", "gpus"], 0.2)).await;
    assert_eq!((pages.len(), failures.len()), (3, 0));
    assert_eq!(
        pages.iter().map(|p| p.url.rsplit('/').next().unwrap()).collect::<Vec<_>>(),
        ["slurm", "storage", "gpus"]
    );
    let hits = site.hits.lock().clone();
    for w in hits.windows(2) {
        assert!(w[1].1 - w[0].1 >= Duration::from_millis(190), "{:?}", w[1].1 - w[0].1);
    }
    assert_eq!(pages[0].headings, ["Guide slurm", "Guide slurm"]);
}

#[tokio::test]
async fn server_error_is_retried_once() {
    let (base, site) = site().await;
    let (pages, failures) = crawler().collect_pages(&sources(&base, &["flaky"], 0.0)).await;
    assert_eq!((pages.len(), failures.len()), (1, 0));
    assert_eq!(site.flaky_calls.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn client_error_is_not_retried() {
    let (base, site) = site().await;
    let (_, failures) = crawler().collect_pages(&sources(&base, &["missing"], 0.0)).await;
    assert_eq!(failures.len(), 1);
    assert_eq!(site.hits.lock().len(), 1);
}

#[tokio::test]
async fn unreachable_host_is_reported() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let (pages, failures) = crawler().collect_pages(&sources(&format!("http://{addr}"), &["x"], 0.0)).await;
    assert!(pages.is_empty());
    assert!(failures[0].reason.starts_with("request failed"), "{}", failures[0].reason);
}

struct FailingSink(AtomicUsize);

#[async_trait]
impl ChunkSink for FailingSink {
    async fn ingest(&self, _: Vec<DocumentChunk>) -> Result<SinkOutcome, SinkError> {
        self.0.fetch_add(1, Ordering::SeqCst);
        Err(SinkError("index unavailable".into()))
    }
}

#[tokio::test]
async fn sink_failure_aborts_run() {
    let (base, _) = site().await;
    let sink = FailingSink(AtomicUsize::new(0));
    let report = crawler()
        .crawl_sources(&sources(&base, &["slurm", "storage", "gpus"], 0.0), &ChunkingProfile::KNOWLEDGE_BASE, &sink)
        .await;
    assert!(report.aborted.as_deref().unwrap().contains("index unavailable"));
    assert_eq!(sink.0.load(Ordering::SeqCst), 1);
    assert_eq!(report.chunks_new, 0);
}
