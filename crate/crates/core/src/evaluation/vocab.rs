//! HPC term vocabulary and the domain score.

use std::collections::BTreeSet;
use std::path::Path;

use thiserror::Error;

pub const DEFAULT_VOCABULARY: &str = include_str!("../../assets/hpc_vocabulary.txt");
pub const MIN_VOCABULARY_TERMS: usize = 50;
/// Matches needed for a full score, as a fraction of the vocabulary size.
pub const SATURATION_FRACTION: f64 = 0.05;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabularyError {
    #[error("vocabulary has {0} terms, need at least {MIN_VOCABULARY_TERMS}")]
    TooSmall(usize),
    #[error("duplicate vocabulary term {0:?}")]
    Duplicate(String),
    #[error("vocabulary term {0:?} is not a lowercase word")]
    Malformed(String),
    #[error("cannot read vocabulary: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HpcVocabulary {
    terms: BTreeSet<String>,
}

impl Default for HpcVocabulary {
    fn default() -> Self {
        Self::parse(DEFAULT_VOCABULARY).expect("bundled vocabulary is valid")
    }
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_'
}

impl HpcVocabulary {
    pub fn new<I, S>(terms: I) -> Result<Self, VocabularyError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = BTreeSet::new();
        for t in terms {
            let t = t.into();
            if t.is_empty() || !t.chars().all(is_word_char) {
                return Err(VocabularyError::Malformed(t));
            }
            if !set.insert(t.clone()) {
                return Err(VocabularyError::Duplicate(t));
            }
        }
        if set.len() < MIN_VOCABULARY_TERMS {
            return Err(VocabularyError::TooSmall(set.len()));
        }
        Ok(Self { terms: set })
    }

    /// One term per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, VocabularyError> {
        Self::new(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')))
    }

    pub fn load(path: &Path) -> Result<Self, VocabularyError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| VocabularyError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.terms.contains(word)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }

    /// Distinct vocabulary terms present in `response`.
    pub fn matches(&self, response: &str) -> BTreeSet<String> {
        response_words(response).into_iter().filter(|w| self.contains(w)).collect()
    }

    pub fn score(&self, response: &str) -> f64 {
        hpc_score_from_matches(self.matches(response).len(), self.len())
    }
}

/// Unique lowercase words; a word is a run of `[a-z0-9_-]` with leading and
/// trailing hyphens/underscores trimmed.
pub fn response_words(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| !is_word_char(c))
        .map(|w| w.trim_matches(|c| c == '-' || c == '_'))
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}

/// `min(matches / (0.05 * vocab_len), 1)`.
pub fn hpc_score_from_matches(matches: usize, vocab_len: usize) -> f64 {
    if vocab_len == 0 {
        return 0.0;
    }
    (matches as f64 / (SATURATION_FRACTION * vocab_len as f64)).min(1.0)
}

pub fn hpc_domain_score(response: &str, vocab: &HpcVocabulary) -> f64 {
    vocab.score(response)
}
