//! Overlapping word-window chunking and content hashing.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text::collapse_whitespace;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProfileError {
    #[error("chunk_words must be positive")]
    EmptyWindow,
    #[error("overlap_words ({overlap}) must be smaller than chunk_words ({chunk})")]
    OverlapTooLarge { chunk: usize, overlap: usize },
}

/// Window geometry for [`chunk_text`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingProfile {
    chunk_words: usize,
    overlap_words: usize,
    min_words: usize,
}

impl ChunkingProfile {
    /// Knowledge-base ingestion: 512-word windows, 64-word overlap, short tails kept.
    pub const KNOWLEDGE_BASE: Self = Self { chunk_words: 512, overlap_words: 64, min_words: 0 };
    /// Training-data crawl: 350-word windows, 50-word overlap, windows under 60 words dropped.
    pub const TRAINING: Self = Self { chunk_words: 350, overlap_words: 50, min_words: 60 };

    pub fn new(chunk_words: usize, overlap_words: usize, min_words: usize) -> Result<Self, ProfileError> {
        if chunk_words == 0 {
            return Err(ProfileError::EmptyWindow);
        }
        if overlap_words >= chunk_words {
            return Err(ProfileError::OverlapTooLarge { chunk: chunk_words, overlap: overlap_words });
        }
        Ok(Self { chunk_words, overlap_words, min_words })
    }

    pub fn chunk_words(&self) -> usize {
        self.chunk_words
    }

    pub fn overlap_words(&self) -> usize {
        self.overlap_words
    }

    pub fn min_words(&self) -> usize {
        self.min_words
    }

    pub fn stride(&self) -> usize {
        self.chunk_words - self.overlap_words
    }

    /// Word ranges `[start, end)` for a text of `n_words` words, after the
    /// minimum-length filter.
    pub fn windows(&self, n_words: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        while start < n_words {
            let end = (start + self.chunk_words).min(n_words);
            if end - start >= self.min_words {
                out.push((start, end));
            }
            if end == n_words {
                break;
            }
            start += self.stride();
        }
        out
    }
}

/// A window of words cut out of a cleaned page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextWindow {
    pub word_start: usize,
    pub word_end: usize,
    pub text: String,
}

/// Split `text` into overlapping word windows. Words are maximal runs of
/// non-whitespace characters.
pub fn chunk_text(text: &str, profile: &ChunkingProfile) -> Vec<TextWindow> {
    let words: Vec<&str> = text.split_whitespace().collect();
    profile
        .windows(words.len())
        .into_iter()
        .map(|(start, end)| TextWindow { word_start: start, word_end: end, text: words[start..end].join(" ") })
        .collect()
}

/// A retrieval unit. `id` is the content hash of `text`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub id: String,
    pub source_url: String,
    pub text: String,
    pub word_start: usize,
    pub word_end: usize,
    pub fetched_at: DateTime<Utc>,
}

/// Chunk a cleaned page and attach provenance.
pub fn chunk_document(
    source_url: &str,
    fetched_at: DateTime<Utc>,
    text: &str,
    profile: &ChunkingProfile,
) -> Vec<DocumentChunk> {
    chunk_text(text, profile)
        .into_iter()
        .map(|w| DocumentChunk {
            id: content_id(&w.text),
            source_url: source_url.to_owned(),
            text: w.text,
            word_start: w.word_start,
            word_end: w.word_end,
            fetched_at,
        })
        .collect()
}

/// Hex SHA-256 of the text after trimming and collapsing internal whitespace.
/// Case is preserved: command names and flags are case-sensitive.
pub fn content_id(text: &str) -> String {
    hex::encode(Sha256::digest(collapse_whitespace(text).as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    /// Independent enumeration: every multiple of the stride that starts
    /// before the end, stopping at the first window that reaches the end.
    fn oracle_windows(n: usize, chunk: usize, overlap: usize, min: usize) -> Vec<(usize, usize)> {
        let stride = chunk - overlap;
        let mut all = Vec::new();
        for k in 0.. {
            let s = k * stride;
            if s >= n {
                break;
            }
            let e = usize::min(s + chunk, n);
            all.push((s, e));
            if e == n {
                break;
            }
        }
        all.into_iter().filter(|(s, e)| e - s >= min).collect()
    }

    #[test]
    fn thousand_words_kb_profile() {
        let chunks = chunk_text(&words(1000), &ChunkingProfile::KNOWLEDGE_BASE);
        let starts: Vec<_> = chunks.iter().map(|c| c.word_start).collect();
        let lens: Vec<_> = chunks.iter().map(|c| c.word_end - c.word_start).collect();
        assert_eq!(starts, vec![0, 448, 896]);
        assert_eq!(lens, vec![512, 512, 104]);
        assert_eq!(oracle_windows(1000, 512, 64, 0), vec![(0, 512), (448, 960), (896, 1000)]);
    }

    #[test]
    fn short_text_single_chunk() {
        let chunks = chunk_text(&words(300), &ChunkingProfile::KNOWLEDGE_BASE);
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].word_end, 300);
    }

    #[test]
    fn training_profile_drops_short_tail() {
        let chunks = chunk_text(&words(380), &ChunkingProfile::TRAINING);
        let ranges: Vec<_> = chunks.iter().map(|c| (c.word_start, c.word_end)).collect();
        assert_eq!(ranges, vec![(0, 350), (300, 380)]);

        // 355 words leave a 55-word tail starting at 300.
        let chunks = chunk_text(&words(355), &ChunkingProfile::TRAINING);
        assert_eq!(chunks.len(), 1);
        assert_eq!(oracle_windows(355, 350, 50, 60), vec![(0, 350)]);
    }

    #[test]
    fn empty_text_yields_nothing() {
        assert!(chunk_text("", &ChunkingProfile::KNOWLEDGE_BASE).is_empty());
        assert!(chunk_text(" \n\t ", &ChunkingProfile::TRAINING).is_empty());
    }

    #[test]
    fn profile_validation() {
        assert_eq!(ChunkingProfile::new(0, 0, 0), Err(ProfileError::EmptyWindow));
        assert!(matches!(ChunkingProfile::new(10, 10, 0), Err(ProfileError::OverlapTooLarge { .. })));
        assert_eq!(ChunkingProfile::new(512, 64, 0).unwrap(), ChunkingProfile::KNOWLEDGE_BASE);
    }

    #[test]
    fn content_id_vectors() {
        assert_eq!(content_id("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(content_id("sbatch job.sh"), content_id("sbatch job.sh"));
        assert_ne!(content_id("sbatch job.sh"), content_id("sbatch job.sH"));
        assert_eq!(content_id("  a \n b "), content_id("a b"));
        assert_eq!(content_id("a b").len(), 64);
    }

    #[test]
    fn chunk_ids_match_text_and_word_counts() {
        let text = words(700);
        for c in chunk_document("https://x.test/", Utc::now(), &text, &ChunkingProfile::KNOWLEDGE_BASE) {
            assert_eq!(c.id, content_id(&c.text));
            assert_eq!(c.word_end - c.word_start, c.text.split_whitespace().count());
        }
    }

    proptest! {
        #[test]
        fn windows_match_enumeration(n in 0usize..3000, chunk in 1usize..600, overlap_frac in 0.0f64..1.0, min in 0usize..100) {
            let overlap = ((chunk as f64) * overlap_frac) as usize % chunk;
            let profile = ChunkingProfile::new(chunk, overlap, min).unwrap();
            prop_assert_eq!(profile.windows(n), oracle_windows(n, chunk, overlap, min));
        }

        #[test]
        fn coverage_and_overlap(n in 1usize..2000, chunk in 2usize..300, overlap_frac in 0.0f64..1.0) {
            let overlap = ((chunk as f64) * overlap_frac) as usize % chunk;
            let profile = ChunkingProfile::new(chunk, overlap, 0).unwrap();
            let w = profile.windows(n);
            let mut covered = vec![false; n];
            for &(s, e) in &w {
                covered[s..e].iter_mut().for_each(|c| *c = true);
            }
            prop_assert!(covered.iter().all(|&c| c));
            for pair in w.windows(2) {
                prop_assert_eq!(pair[0].1 - pair[1].0, overlap);
            }
        }
    }
}
