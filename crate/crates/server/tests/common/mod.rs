#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::Path;
use axum::response::Html;
use axum::routing::get;
use axum::Router;
use hpcrag_client::HpcragClient;
use hpcrag_core::generation::{ModelRegistry, StubChatBackend};
use hpcrag_core::{EmbeddingClient, GenerationClient, SourceSpec};
use hpcrag_server::state::build_orchestrator_with;
use hpcrag_server::{AppState, ServiceConfig};
use tempfile::TempDir;

pub const DIM: usize = 256;

pub const PAGES: [(&str, &str, &str); 3] = [
    (
        "sbatch",
        "Submitting batch jobs",
        "Write a job script with #SBATCH directives for nodes, ntasks and walltime, then submit it with \
         sbatch job.sh. The scheduler queues the job on the requested partition. Use srun inside the \
         script to launch parallel steps across the allocated nodes.",
    ),
    (
        "gpu",
        "GPU partitions",
        "Request GPUs with --gres=gpu:2 or --gpus-per-node. CUDA modules are loaded with module load cuda. \
         Each A100 node has 80 GB of device memory; check utilisation with nvidia-smi during the job.",
    ),
    (
        "storage",
        "Storage and scratch",
        "Home directories are backed up and have a small quota. Large datasets belong on the Lustre scratch \
         filesystem, which is purged after 30 days. Use lfs quota to see your usage.",
    ),
];

pub fn page_html(title: &str, body: &str) -> String {
    format!(
        "<html><head><title>{title}</title></head><body><nav>Home | Docs</nav><main><h1>{title}</h1>\
         <p>{body}</p></main><footer>Research Computing</footer></body></html>"
    )
}

async fn serve_router(app: Router) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    addr
}

/// Serves [`PAGES`] under `/docs/{name}`; `/slow` answers after `slow_ms`.
pub async fn fixture_site(slow_ms: u64) -> SocketAddr {
    let app = Router::new()
        .route(
            "/docs/{name}",
            get(|Path(name): Path<String>| async move {
                match PAGES.iter().find(|(n, _, _)| *n == name) {
                    Some((_, t, b)) => Ok(Html(page_html(t, b))),
                    None => Err(axum::http::StatusCode::NOT_FOUND),
                }
            }),
        )
        .route(
            "/slow",
            get(move || async move {
                tokio::time::sleep(Duration::from_millis(slow_ms)).await;
                Html(page_html("Slow page", "This page takes a while to answer with module and slurm content."))
            }),
        );
    serve_router(app).await
}

pub fn page_urls(site: SocketAddr) -> Vec<String> {
    PAGES.iter().map(|(n, _, _)| format!("http://{site}/docs/{n}")).collect()
}

pub fn sources_for(urls: &[String]) -> Vec<SourceSpec> {
    urls.iter()
        .map(|u| SourceSpec::new(u.parse().unwrap(), hpcrag_core::corpus::Priority::P1))
        .map(|s| SourceSpec { crawl_delay: 0.0, ..s })
        .collect()
}

/// A closed local port: connections are refused.
pub fn dead_url(path: &str) -> String {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = l.local_addr().unwrap().port();
    drop(l);
    format!("http://127.0.0.1:{port}{path}")
}

pub struct TestServer {
    pub dir: TempDir,
    pub addr: SocketAddr,
    pub client: HpcragClient,
    pub state: AppState,
}

impl TestServer {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

pub fn stub_config(dir: &TempDir) -> ServiceConfig {
    ServiceConfig { default_model: "stub-model".into(), ..ServiceConfig::stub(dir.path()) }
}

pub async fn start(state: AppState, dir: TempDir) -> TestServer {
    let (addr, _task) = hpcrag_server::spawn(state.clone()).await.unwrap();
    let client = HpcragClient::new(&format!("http://{addr}")).unwrap();
    TestServer { dir, addr, client, state }
}

/// Stub backends, loops off, no sources.
pub async fn stub_server() -> TestServer {
    let dir = tempfile::tempdir().unwrap();
    let state = AppState::from_parts(
        stub_config(&dir),
        hpcrag_server::state::build_orchestrator(&stub_config(&dir)).unwrap(),
        Vec::new(),
    )
    .unwrap();
    start(state, dir).await
}

/// Stub embedder and the given chat backend.
pub async fn server_with_backend(backend: StubChatBackend, sources: Vec<SourceSpec>) -> TestServer {
    let dir = tempfile::tempdir().unwrap();
    let config = stub_config(&dir);
    let generator = GenerationClient::new(Arc::new(backend), ModelRegistry::default());
    let orchestrator = build_orchestrator_with(&config, EmbeddingClient::stub(DIM), generator).unwrap();
    let state = AppState::from_parts(config, orchestrator, sources).unwrap();
    start(state, dir).await
}

/// Builds from a configuration, as the binary does, and starts the loops.
pub async fn server_from_config(dir: TempDir, config: ServiceConfig, sources: Vec<SourceSpec>) -> TestServer {
    let orchestrator = hpcrag_server::state::build_orchestrator(&config).unwrap();
    let state = AppState::from_parts(config, orchestrator, sources).unwrap();
    start(state, dir).await
}

/// Crawls the fixture site into the server's index.
pub async fn seed(server: &TestServer, site: SocketAddr) {
    let report = server
        .client
        .crawl(&hpcrag_client::types::CrawlRequest { urls: Some(page_urls(site)), max_priority: None, wait: true })
        .await
        .unwrap()
        .report
        .unwrap();
    assert_eq!(report.pages_fetched, PAGES.len(), "{report:?}");
}
