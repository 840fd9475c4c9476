//! Query embedding, top-k lookup and the grounded context block.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbeddingClient, EmbeddingError};
use crate::index::{IndexError, ScoredHit, VectorIndex};

pub const CONTEXT_HEADER: &str = "[HPC Knowledge Base, Retrieved Context]";
/// Character budget for the whole block, headers included.
pub const CONTEXT_CHAR_CAP: usize = 3000;
pub const DEFAULT_TOP_K: usize = 5;

pub const DEFAULT_GROUNDING_TEMPLATE: &str = include_str!("../assets/grounding_template.txt");

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Default)]
pub struct RetrievedContext {
    pub hits: Vec<ScoredHit>,
    pub formatted_block: String,
    pub total_chars_before_cap: usize,
    /// True when nothing was retrieved.
    pub no_context: bool,
}

impl RetrievedContext {
    pub fn empty() -> Self {
        Self { no_context: true, ..Self::default() }
    }

    pub fn documents(&self) -> Vec<String> {
        self.hits.iter().map(|h| h.record.metadata.text.clone()).collect()
    }
}

/// Serializable view of a hit, as cited in responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceCitation {
    pub rank: usize,
    pub id: String,
    pub source_url: String,
    pub score: f32,
    pub text: String,
}

impl SourceCitation {
    pub fn from_hits(hits: &[ScoredHit]) -> Vec<Self> {
        hits.iter()
            .enumerate()
            .map(|(i, h)| Self {
                rank: i + 1,
                id: h.record.id.clone(),
                source_url: h.record.metadata.source_url.clone(),
                score: h.score,
                text: h.record.metadata.text.clone(),
            })
            .collect()
    }
}

pub fn source_line(rank: usize, url: &str, score: f32) -> String {
    format!("[Source {rank}: {url} | relevance {score:.2}]")
}

/// Render hits as the context block, capped at [`CONTEXT_CHAR_CAP`] characters.
pub fn format_context(hits: &[ScoredHit]) -> String {
    format_context_capped(hits, CONTEXT_CHAR_CAP).0
}

/// Returns the block and its length in characters before capping.
///
/// Lines are kept whole while they fit. A document line that does not fit is
/// cut at a character boundary; a source header line is never cut, and a
/// header left without any content is dropped.
pub fn format_context_capped(hits: &[ScoredHit], cap: usize) -> (String, usize) {
    if hits.is_empty() {
        return (String::new(), 0);
    }
    // (line, is_header)
    let mut lines: Vec<(String, bool)> = vec![(CONTEXT_HEADER.to_owned(), true)];
    for (i, h) in hits.iter().enumerate() {
        lines.push((source_line(i + 1, &h.record.metadata.source_url, h.score), true));
        for content in h.record.metadata.text.lines() {
            lines.push((content.to_owned(), false));
        }
    }
    let total: usize = lines.iter().map(|(l, _)| l.chars().count()).sum::<usize>() + lines.len() - 1;

    let mut out: Vec<String> = Vec::new();
    let mut used = 0usize;
    let mut last_is_header = false;
    for (line, header) in lines {
        let sep = usize::from(!out.is_empty());
        let len = line.chars().count();
        if used + sep + len <= cap {
            used += sep + len;
            out.push(line);
            last_is_header = header;
            continue;
        }
        if !header {
            let room = cap.saturating_sub(used + sep);
            if room > 0 {
                out.push(line.chars().take(room).collect());
                last_is_header = false;
            }
        }
        break;
    }
    if last_is_header && out.len() > 1 {
        out.pop();
    }
    (out.join("\n"), total)
}

/// Prompt template with `{context}` and `{question}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundingTemplate(String);

impl Default for GroundingTemplate {
    fn default() -> Self {
        Self(DEFAULT_GROUNDING_TEMPLATE.trim_end().to_owned())
    }
}

impl GroundingTemplate {
    pub fn new(template: impl Into<String>) -> Self {
        Self(template.into())
    }

    pub fn load(path: &std::path::Path) -> std::io::Result<Self> {
        Ok(Self(std::fs::read_to_string(path)?.trim_end().to_owned()))
    }

    /// The user message: the bare question when there is no context.
    pub fn render(&self, context_block: &str, question: &str) -> String {
        if context_block.is_empty() {
            return question.to_owned();
        }
        self.0.replace("{context}", context_block).replace("{question}", question)
    }
}

#[derive(Clone)]
pub struct Retriever {
    embedder: EmbeddingClient,
    index: Arc<VectorIndex>,
}

impl Retriever {
    pub fn new(embedder: EmbeddingClient, index: Arc<VectorIndex>) -> Self {
        Self { embedder, index }
    }

    pub fn index(&self) -> &Arc<VectorIndex> {
        &self.index
    }

    pub fn embedder(&self) -> &EmbeddingClient {
        &self.embedder
    }

    pub async fn retrieve(&self, query: &str, k: usize) -> Result<RetrievedContext, RetrievalError> {
        if k == 0 {
            return Err(IndexError::InvalidK.into());
        }
        if self.index.is_empty() {
            return Ok(RetrievedContext::empty());
        }
        let vector = self.embedder.embed(query).await?;
        let hits = self.index.query(vector.as_slice(), k)?;
        let (formatted_block, total_chars_before_cap) = format_context_capped(&hits, CONTEXT_CHAR_CAP);
        Ok(RetrievedContext { no_context: hits.is_empty(), hits, formatted_block, total_chars_before_cap })
    }
}
