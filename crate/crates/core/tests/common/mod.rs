#![allow(dead_code)]

use std::net::SocketAddr;

use axum::Router;
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::SeedableRng;

const WORDS: &[&str] = &[
    "sbatch",
    "srun",
    "partition",
    "node",
    "gpu",
    "module",
    "scratch",
    "quota",
    "job",
    "array",
    "walltime",
    "memory",
    "cores",
    "threads",
    "mpi",
    "openmp",
    "cuda",
    "lustre",
    "queue",
    "priority",
    "allocation",
    "account",
    "storage",
    "transfer",
    "globus",
    "container",
    "apptainer",
    "profile",
    "checkpoint",
    "request",
    "submit",
    "cancel",
    "status",
    "output",
    "error",
    "script",
    "environment",
    "load",
    "compile",
    "run",
];

/// Deterministic pseudo-documentation of `words` words.
pub fn body_text(seed: u64, words: usize) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..words).map(|_| *WORDS.choose(&mut rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// A page with boilerplate around a main body.
pub fn fixture_html(title: &str, body: &str) -> String {
    format!(
        "<!doctype html><html><head><title>{title}</title><style>p {{ color: red }}</style></head>\
         <body><nav>NAVIGATION LINKS</nav><header>SITE HEADER</header>\
         <main><h1>{title}</h1><p>{body}</p></main>\
         <script>var tracking = 1;</script><footer>FOOTER TEXT</footer></body></html>"
    )
}

pub async fn serve(router: Router) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router).await.unwrap();
    });
    addr
}

pub const DIM: usize = 256;

pub const KB_DOCS: &[(&str, &str)] = &[
    (
        "https://docs.example.edu/slurm/sbatch",
        "Submit batch jobs with sbatch. Request a partition, walltime and memory in the job script.",
    ),
    (
        "https://docs.example.edu/slurm/squeue",
        "Use squeue to list pending and running jobs; scancel removes a job from the queue.",
    ),
    (
        "https://docs.example.edu/gpu",
        "Request GPUs with --gres=gpu:1 on the gpu partition and load the cuda module first.",
    ),
    (
        "https://docs.example.edu/storage",
        "Scratch storage on lustre is purged after 30 days; home directories have a quota.",
    ),
    ("https://docs.example.edu/mpi", "Launch MPI programs with srun inside an allocation; mpirun is not supported."),
];

/// An index holding `KB_DOCS`, embedded with the stub embedder.
pub async fn seeded_index() -> std::sync::Arc<hpcrag_core::VectorIndex> {
    use hpcrag_core::corpus::content_id;
    use hpcrag_core::index::RecordMetadata;
    use hpcrag_core::{EmbeddingClient, IndexConfig, VectorIndex, VectorRecord};
    let embedder = EmbeddingClient::stub(DIM);
    let index = VectorIndex::new(IndexConfig::with_dimension(DIM));
    let mut records = Vec::new();
    for (url, text) in KB_DOCS {
        records.push(VectorRecord {
            id: content_id(text),
            vector: embedder.embed(text).await.unwrap().into_vec(),
            metadata: RecordMetadata {
                source_url: url.to_string(),
                text: text.to_string(),
                fetched_at: chrono::DateTime::from_timestamp(1_700_000_000, 0).unwrap(),
            },
        });
    }
    index.upsert(records).unwrap();
    std::sync::Arc::new(index)
}

pub fn orchestrator_with(
    dir: &std::path::Path,
    backend: hpcrag_core::generation::StubChatBackend,
    embedder: hpcrag_core::EmbeddingClient,
    index: std::sync::Arc<hpcrag_core::VectorIndex>,
) -> hpcrag_core::Orchestrator {
    use hpcrag_core::evaluation::{Evaluator, HpcVocabulary};
    use hpcrag_core::generation::ModelRegistry;
    use hpcrag_core::orchestrator::OrchestratorConfig;
    use hpcrag_core::{GenerationClient, Orchestrator, Retriever};
    let generator = GenerationClient::new(std::sync::Arc::new(backend), ModelRegistry::default());
    let evaluator = Evaluator::new(hpcrag_core::EmbeddingClient::stub(DIM), HpcVocabulary::default());
    Orchestrator::new(OrchestratorConfig::new(dir, "stub-model"), Retriever::new(embedder, index), generator, evaluator)
        .unwrap()
}

pub async fn stub_orchestrator(
    dir: &std::path::Path,
    backend: hpcrag_core::generation::StubChatBackend,
) -> hpcrag_core::Orchestrator {
    orchestrator_with(dir, backend, hpcrag_core::EmbeddingClient::stub(DIM), seeded_index().await)
}
