//! Documentation ingestion: fetch, clean, chunk, hash, upsert.

mod chunk;
mod clean;
mod crawl;
mod sources;

pub use chunk::{chunk_document, chunk_text, content_id, ChunkingProfile, DocumentChunk, ProfileError, TextWindow};
pub use clean::{clean_html, extract_headings};
pub use crawl::{
    ChunkSink, CrawlConfig, CrawlFailure, Crawler, FetchedPage, IndexSink, IngestionReport, SinkError, SinkOutcome,
    USER_AGENT,
};
pub use sources::{
    default_sources, load_sources, parse_sources, up_to_priority, Priority, SourceError, SourceSpec,
    DEFAULT_CRAWL_DELAY,
};
