use std::sync::{Arc, Mutex};
use std::time::Instant;

use anyhow::Context;
use chrono::Utc;
use hpcrag_client::types::{CrawlError, CrawlReport};
use hpcrag_core::corpus::{load_sources, ChunkingProfile, CrawlConfig, Crawler, IndexSink, IngestionReport};
use hpcrag_core::embedding::EmbeddingBackendConfig;
use hpcrag_core::evaluation::{Evaluator, HpcVocabulary};
use hpcrag_core::generation::{HttpChatBackend, HttpChatConfig, ModelRegistry, StubChatBackend};
use hpcrag_core::orchestrator::OrchestratorConfig;
use hpcrag_core::retrieval::GroundingTemplate;
use hpcrag_core::{EmbeddingClient, GenerationClient, IndexConfig, Orchestrator, Retriever, SourceSpec, VectorIndex};
use tokio::sync::{Mutex as AsyncMutex, OwnedMutexGuard};

use crate::config::{BackendKind, ServiceConfig, StubMode};
use crate::loops::{spawn_periodic, LoopHandle};

/// Shared by every handler.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    config: ServiceConfig,
    orchestrator: Orchestrator,
    crawler: Crawler,
    sources: Vec<SourceSpec>,
    crawl_lock: Arc<AsyncMutex<()>>,
    last_crawl: Mutex<Option<CrawlReport>>,
    loops: Mutex<Vec<LoopHandle>>,
    started: Instant,
}

/// Who asked for a crawl.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrawlTrigger {
    Api,
    Scheduled,
}

impl CrawlTrigger {
    fn as_str(self) -> &'static str {
        match self {
            CrawlTrigger::Api => "api",
            CrawlTrigger::Scheduled => "scheduled",
        }
    }
}

/// Held for the duration of one crawl.
pub struct CrawlPermit(#[allow(dead_code)] OwnedMutexGuard<()>);

pub fn build_embedder(config: &ServiceConfig) -> anyhow::Result<EmbeddingClient> {
    let e = &config.embedding;
    Ok(match e.backend {
        BackendKind::Stub => EmbeddingClient::stub(e.dimension),
        BackendKind::Http => EmbeddingClient::http(&EmbeddingBackendConfig {
            endpoint_url: e.endpoint_url.clone(),
            model: e.model.clone(),
            batch_size: e.batch_size,
            timeout_secs: e.timeout_secs,
            dimension: e.dimension,
        })
        .context("building the embedding client")?,
    })
}

pub fn build_generator(config: &ServiceConfig) -> anyhow::Result<GenerationClient> {
    let g = &config.generation;
    let registry = match &g.models_path {
        Some(p) => ModelRegistry::load(p).with_context(|| format!("loading model registry {}", p.display()))?,
        None => ModelRegistry::default(),
    };
    Ok(match g.backend {
        BackendKind::Stub => {
            let stub = match g.stub_mode {
                StubMode::Echo => StubChatBackend::echo(),
                StubMode::Fixed => StubChatBackend::fixed(g.stub_text.clone()),
            };
            GenerationClient::new(Arc::new(stub), registry)
        }
        BackendKind::Http => {
            let backend = HttpChatBackend::new(HttpChatConfig {
                endpoint_url: g.endpoint_url.clone(),
                timeout_secs: g.timeout_secs,
            })
            .context("building the generation client")?;
            GenerationClient::new(Arc::new(backend), registry)
        }
    })
}

pub fn orchestrator_config(config: &ServiceConfig) -> anyhow::Result<OrchestratorConfig> {
    let mut oc = OrchestratorConfig::new(&config.data_dir, &config.default_model);
    if let Some(p) = &config.system_prompt_path {
        oc.system_prompt = std::fs::read_to_string(p)
            .with_context(|| format!("reading system prompt {}", p.display()))?
            .trim()
            .to_owned();
    }
    if let Some(p) = &config.grounding_template_path {
        oc.grounding =
            GroundingTemplate::load(p).with_context(|| format!("reading grounding template {}", p.display()))?;
    }
    oc.history_turns = config.history_turns;
    oc.history_chars = config.history_chars;
    oc.session_ttl = chrono::Duration::minutes(config.session_ttl_minutes as i64);
    oc.ephemeral_sessions = config.ephemeral_sessions;
    Ok(oc)
}

/// Builds the engine described by `config` without starting any loop.
pub fn build_orchestrator(config: &ServiceConfig) -> anyhow::Result<Orchestrator> {
    build_orchestrator_with(config, build_embedder(config)?, build_generator(config)?)
}

/// As [`build_orchestrator`] with the given backends in place of the configured ones.
pub fn build_orchestrator_with(
    config: &ServiceConfig,
    embedder: EmbeddingClient,
    generator: GenerationClient,
) -> anyhow::Result<Orchestrator> {
    std::fs::create_dir_all(&config.data_dir)
        .with_context(|| format!("creating data directory {}", config.data_dir.display()))?;
    let index_config = IndexConfig {
        dimension: embedder.dimension(),
        hnsw_m: config.index.hnsw_m,
        hnsw_ef_construction: config.index.hnsw_ef_construction,
        hnsw_ef_search: config.index.hnsw_ef_search,
        storage_path: Some(config.index_dir()),
        seed: config.index.seed,
    };
    let index = VectorIndex::open(index_config)
        .with_context(|| format!("opening the index at {}", config.index_dir().display()))?;
    let vocabulary = match &config.vocabulary_path {
        Some(p) => HpcVocabulary::load(p).with_context(|| format!("loading vocabulary {}", p.display()))?,
        None => HpcVocabulary::default(),
    };
    let evaluator = Evaluator::new(embedder.clone(), vocabulary).with_bert_baseline(config.bert_baseline);
    let retriever = Retriever::new(embedder, Arc::new(index));
    Orchestrator::new(orchestrator_config(config)?, retriever, generator, evaluator)
        .context("opening the session store")
}

pub fn load_configured_sources(config: &ServiceConfig) -> anyhow::Result<Vec<SourceSpec>> {
    match &config.sources_path {
        Some(p) => Ok(load_sources(p)?),
        None => Ok(hpcrag_core::corpus::default_sources()),
    }
}

impl AppState {
    /// Builds every component from `config`. Backends are not contacted.
    pub fn build(config: ServiceConfig) -> anyhow::Result<Self> {
        let orchestrator = build_orchestrator(&config)?;
        let sources = load_configured_sources(&config)?;
        Self::from_parts(config, orchestrator, sources)
    }

    /// Assembles a state around an existing engine, e.g. one with scripted backends.
    pub fn from_parts(
        config: ServiceConfig,
        orchestrator: Orchestrator,
        sources: Vec<SourceSpec>,
    ) -> anyhow::Result<Self> {
        let crawler = Crawler::new(CrawlConfig {
            timeout: std::time::Duration::from_secs(config.crawl_timeout_secs),
            ..CrawlConfig::default()
        })
        .context("building the crawler")?;
        Ok(Self {
            inner: Arc::new(Inner {
                config,
                orchestrator,
                crawler,
                sources,
                crawl_lock: Arc::new(AsyncMutex::new(())),
                last_crawl: Mutex::new(None),
                loops: Mutex::new(Vec::new()),
                started: Instant::now(),
            }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.inner.orchestrator
    }

    pub fn sources(&self) -> &[SourceSpec] {
        &self.inner.sources
    }

    pub fn uptime_s(&self) -> f64 {
        self.inner.started.elapsed().as_secs_f64()
    }

    pub fn crawl_in_progress(&self) -> bool {
        self.inner.crawl_lock.try_lock().is_err()
    }

    pub fn last_crawl(&self) -> Option<CrawlReport> {
        self.inner.last_crawl.lock().expect("last crawl lock").clone()
    }

    /// `None` while another crawl runs.
    pub fn try_crawl_permit(&self) -> Option<CrawlPermit> {
        Arc::clone(&self.inner.crawl_lock).try_lock_owned().ok().map(CrawlPermit)
    }

    /// Crawls `sources` into the index and records the report.
    pub async fn run_crawl(&self, _permit: CrawlPermit, sources: &[SourceSpec], trigger: CrawlTrigger) -> CrawlReport {
        let started_at = Utc::now();
        let retriever = self.orchestrator().retriever();
        let sink = IndexSink::new(retriever.embedder().clone(), std::sync::Arc::clone(retriever.index()));
        let r: IngestionReport =
            self.inner.crawler.crawl_sources(sources, &ChunkingProfile::KNOWLEDGE_BASE, &sink).await;
        let report = CrawlReport {
            pages_fetched: r.pages_fetched,
            pages_failed: r.pages_failed,
            chunks_new: r.chunks_new,
            chunks_skipped_duplicate: r.chunks_skipped_duplicate,
            errors: r.errors.into_iter().map(|f| CrawlError { url: f.url, reason: f.reason }).collect(),
            aborted: r.aborted,
            started_at,
            finished_at: Utc::now(),
            trigger: trigger.as_str().to_owned(),
        };
        tracing::info!(
            trigger = trigger.as_str(),
            fetched = report.pages_fetched,
            failed = report.pages_failed,
            new = report.chunks_new,
            "crawl finished"
        );
        *self.inner.last_crawl.lock().expect("last crawl lock") = Some(report.clone());
        report
    }

    /// One scheduled crawl over the configured sources. Fails when the run
    /// aborted or when no page could be fetched; skips when a crawl is running.
    pub async fn scheduled_crawl(&self) -> anyhow::Result<()> {
        let Some(permit) = self.try_crawl_permit() else {
            tracing::info!("scheduled crawl skipped, another crawl is running");
            return Ok(());
        };
        let sources = self.inner.sources.clone();
        let report = self.run_crawl(permit, &sources, CrawlTrigger::Scheduled).await;
        if let Some(reason) = report.aborted {
            anyhow::bail!("crawl aborted: {reason}");
        }
        if report.pages_fetched == 0 && report.pages_failed > 0 {
            anyhow::bail!("all {} pages failed", report.pages_failed);
        }
        Ok(())
    }

    /// Expires idle sessions and retries queued feedback ingestion.
    pub async fn cleanup(&self) -> anyhow::Result<()> {
        let removed = self.orchestrator().cleanup_sessions(Utc::now());
        let retried = self.orchestrator().feedback().retry_pending().await;
        tracing::debug!(removed, retried, "cleanup pass");
        Ok(())
    }

    /// Schedules the crawl and cleanup loops per the configuration.
    pub fn start_loops(&self) {
        let c = &self.inner.config;
        let crawl = if c.auto_crawl_enabled {
            let s = self.clone();
            spawn_periodic("auto_crawl", c.auto_crawl_interval(), move || {
                let s = s.clone();
                async move { s.scheduled_crawl().await }
            })
        } else {
            LoopHandle::disabled("auto_crawl", c.auto_crawl_interval())
        };
        let cleanup = if c.cleanup_enabled {
            let s = self.clone();
            spawn_periodic("session_cleanup", c.cleanup_interval(), move || {
                let s = s.clone();
                async move { s.cleanup().await }
            })
        } else {
            LoopHandle::disabled("session_cleanup", c.cleanup_interval())
        };
        let mut loops = self.inner.loops.lock().expect("loops lock");
        for old in loops.drain(..) {
            old.stop();
        }
        loops.push(crawl);
        loops.push(cleanup);
    }

    pub fn stop_loops(&self) {
        for l in self.inner.loops.lock().expect("loops lock").iter() {
            l.stop();
        }
    }

    pub fn loop_snapshots(&self) -> Vec<crate::loops::LoopSnapshot> {
        self.inner.loops.lock().expect("loops lock").iter().map(LoopHandle::snapshot).collect()
    }
}
