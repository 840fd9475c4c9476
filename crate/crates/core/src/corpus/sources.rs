//! Seed-source list: one `[[source]]` table per documentation page.
//!
//! ```toml
//! [[source]]
//! url = "https://slurm.schedmd.com/sbatch.html"
//! priority = "P1"
//! crawl_delay = 0.3   # seconds, optional
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

/// Default pause between two requests to the same host, in seconds.
pub const DEFAULT_CRAWL_DELAY: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Priority {
    P1,
    P2,
    P3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub url: Url,
    pub priority: Priority,
    #[serde(default = "default_delay")]
    pub crawl_delay: f64,
}

fn default_delay() -> f64 {
    DEFAULT_CRAWL_DELAY
}

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("failed to read source list {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid source list: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("source {url}: {reason}")]
    Invalid { url: String, reason: String },
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct SourceFile {
    #[serde(default)]
    source: Vec<SourceSpec>,
}

impl SourceSpec {
    pub fn new(url: Url, priority: Priority) -> Self {
        Self { url, priority, crawl_delay: DEFAULT_CRAWL_DELAY }
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        if !matches!(self.url.scheme(), "http" | "https") || self.url.host_str().is_none() {
            return Err(SourceError::Invalid {
                url: self.url.to_string(),
                reason: "expected an absolute http(s) URL".into(),
            });
        }
        if !(self.crawl_delay.is_finite() && self.crawl_delay >= 0.0) {
            return Err(SourceError::Invalid {
                url: self.url.to_string(),
                reason: format!("crawl_delay must be >= 0, got {}", self.crawl_delay),
            });
        }
        Ok(())
    }
}

pub fn parse_sources(text: &str) -> Result<Vec<SourceSpec>, SourceError> {
    let file: SourceFile = toml::from_str(text)?;
    for s in &file.source {
        s.validate()?;
    }
    Ok(file.source)
}

pub fn load_sources(path: &Path) -> Result<Vec<SourceSpec>, SourceError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| SourceError::Io { path: path.display().to_string(), source })?;
    parse_sources(&text)
}

/// Sources at or above the given priority (P1 is highest).
pub fn up_to_priority(sources: &[SourceSpec], max: Priority) -> Vec<SourceSpec> {
    sources.iter().filter(|s| s.priority <= max).cloned().collect()
}

/// The shipped seed list.
pub fn default_sources() -> Vec<SourceSpec> {
    parse_sources(include_str!("../../assets/sources.toml")).expect("shipped source list is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_default_delay() {
        let s = parse_sources(
            r#"
            [[source]]
            url = "https://example.edu/hpc/"
            priority = "P2"
            [[source]]
            url = "http://x.test/a"
            priority = "P1"
            crawl_delay = 0.0
            "#,
        )
        .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].crawl_delay, 0.3);
        assert_eq!(s[1].priority, Priority::P1);
        assert_eq!(up_to_priority(&s, Priority::P1).len(), 1);
    }

    #[test]
    fn rejects_negative_delay_and_non_http() {
        let neg = "[[source]]\nurl = \"https://x.test/\"\npriority = \"P1\"\ncrawl_delay = -1.0\n";
        assert!(matches!(parse_sources(neg), Err(SourceError::Invalid { .. })));
        let ftp = "[[source]]\nurl = \"ftp://x.test/\"\npriority = \"P1\"\n";
        assert!(matches!(parse_sources(ftp), Err(SourceError::Invalid { .. })));
        let rel = "[[source]]\nurl = \"/relative\"\npriority = \"P1\"\n";
        assert!(matches!(parse_sources(rel), Err(SourceError::Parse(_))));
    }

    #[test]
    fn shipped_list_loads() {
        let s = default_sources();
        assert!(s.len() >= 35);
        assert!(s.iter().any(|s| s.priority == Priority::P1));
    }
}
