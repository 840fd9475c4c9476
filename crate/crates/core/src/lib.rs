//! Core engine for a locally deployable HPC documentation assistant.
//!
//! The crate is organised along the request path:
//!
//! - [`corpus`] fetches documentation pages, strips boilerplate and splits
//!   the text into overlapping word windows keyed by content hash.
//! - [`index`] is a persistent HNSW cosine index with an exact brute-force
//!   counterpart used for verification.
//! - [`embedding`] and [`generation`] are clients for external inference
//!   servers speaking the common embeddings / chat-completions protocols,
//!   each with a deterministic offline stub.
//! - [`retrieval`] turns a query into a grounded context block.
//! - [`evaluation`] scores responses with five metrics and a composite
//!   leaderboard score.
//! - [`orchestrator`] ties the stages together and owns sessions, benchmark
//!   runs and the feedback loop.
//! - [`dataset`] builds instruction-tuning data from crawled documentation.

pub mod corpus;
pub mod dataset;
pub mod embedding;
pub mod evaluation;
pub mod generation;
pub mod index;
pub mod orchestrator;
pub mod retrieval;
pub mod text;

pub use corpus::{ChunkingProfile, DocumentChunk, SourceSpec};
pub use embedding::{EmbeddingClient, EmbeddingVector};
pub use evaluation::{composite_score, MetricSet};
pub use generation::{ChatMessage, GenerationClient, GenerationResult, ModelSpec};
pub use index::{IndexConfig, ScoredHit, VectorIndex, VectorRecord};
pub use orchestrator::{Orchestrator, PipelineState};
pub use retrieval::{RetrievedContext, Retriever};
