//! Pair files, question normalization, dedup/filter and training JSONL.

use std::collections::HashSet;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use md5::{Digest, Md5};
use serde::{Deserialize, Serialize};

use super::{DatasetError, SourceStage, TrainingPair};
use crate::generation::Role;

pub const MIN_QUESTION_CHARS: usize = 20;
pub const MIN_ANSWER_CHARS: usize = 50;

pub const CURATED_PAIRS: &str = include_str!("../../assets/curated_pairs.jsonl");
pub const GPU_ADVISOR_PAIRS: &str = include_str!("../../assets/gpu_advisor_pairs.jsonl");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairLine {
    question: String,
    answer: String,
    #[serde(default)]
    source_url: Option<String>,
}

/// Strict JSONL parse: every non-blank line must be `{question, answer}`
/// with non-empty fields.
pub fn parse_pairs(text: &str, origin: &str, stage: SourceStage) -> Result<Vec<TrainingPair>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| DatasetError::MalformedPair { origin: origin.to_owned(), line: i + 1, message };
        let rec: PairLine = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if rec.question.trim().is_empty() || rec.answer.trim().is_empty() {
            return Err(bad("empty question or answer".into()));
        }
        out.push(TrainingPair {
            question: rec.question,
            answer: rec.answer,
            source_stage: stage,
            source_url: rec.source_url,
        });
    }
    Ok(out)
}

pub fn load_pairs(path: &Path, stage: SourceStage) -> Result<Vec<TrainingPair>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    parse_pairs(&text, &path.display().to_string(), stage)
}

pub fn load_curated(path: &Path) -> Result<Vec<TrainingPair>, DatasetError> {
    load_pairs(path, SourceStage::Curated)
}

pub fn load_gpu_advisor(path: &Path) -> Result<Vec<TrainingPair>, DatasetError> {
    load_pairs(path, SourceStage::GpuAdvisor)
}

pub fn bundled_curated() -> Vec<TrainingPair> {
    parse_pairs(CURATED_PAIRS, "bundled curated pairs", SourceStage::Curated).expect("bundled file is valid")
}

pub fn bundled_gpu_advisor() -> Vec<TrainingPair> {
    parse_pairs(GPU_ADVISOR_PAIRS, "bundled GPU advisor pairs", SourceStage::GpuAdvisor).expect("bundled file is valid")
}

/// Lowercase, trim, collapse whitespace, strip trailing punctuation.
pub fn normalize_question(q: &str) -> String {
    let collapsed = q.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace()).to_owned()
}

/// Hex MD5 of the normalized question.
pub fn question_key(q: &str) -> String {
    hex::encode(Md5::digest(normalize_question(q).as_bytes()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCounts {
    pub input: usize,
    pub removed_duplicate: usize,
    pub removed_short_question: usize,
    pub removed_short_answer: usize,
    pub kept: usize,
}

/// First occurrence of each question key wins, so callers order anchors
/// first. Length filters run on the survivors; a short question is counted
/// once even if its answer is short too.
pub fn dedup_and_filter(pairs: Vec<TrainingPair>) -> (Vec<TrainingPair>, FilterCounts) {
    let mut counts = FilterCounts { input: pairs.len(), ..FilterCounts::default() };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for p in pairs {
        if !seen.insert(question_key(&p.question)) {
            counts.removed_duplicate += 1;
        } else if p.question.trim().chars().count() < MIN_QUESTION_CHARS {
            counts.removed_short_question += 1;
        } else if p.answer.trim().chars().count() < MIN_ANSWER_CHARS {
            counts.removed_short_answer += 1;
        } else {
            out.push(p);
        }
    }
    counts.kept = out.len();
    (out, counts)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub source_stage: SourceStage,
    pub source_url: Option<String>,
}

/// One line of the training file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub messages: Vec<TrainingMessage>,
    pub meta: TrainingMeta,
}

impl TrainingRecord {
    pub fn from_pair(pair: &TrainingPair, system_prompt: &str) -> Self {
        let msg = |role, content: &str| TrainingMessage { role, content: content.to_owned() };
        Self {
            messages: vec![
                msg(Role::System, system_prompt),
                msg(Role::User, &pair.question),
                msg(Role::Assistant, &pair.answer),
            ],
            meta: TrainingMeta { source_stage: pair.source_stage, source_url: pair.source_url.clone() },
        }
    }

    pub fn to_pair(&self) -> Option<TrainingPair> {
        let find = |role| self.messages.iter().find(|m| m.role == role).map(|m| m.content.clone());
        Some(TrainingPair {
            question: find(Role::User)?,
            answer: find(Role::Assistant)?,
            source_stage: self.meta.source_stage,
            source_url: self.meta.source_url.clone(),
        })
    }
}

/// Writes one JSON record per pair and returns the count. An empty slice
/// produces an empty file.
pub fn emit_training_file(pairs: &[TrainingPair], path: &Path, system_prompt: &str) -> io::Result<usize> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for p in pairs {
        serde_json::to_writer(&mut w, &TrainingRecord::from_pair(p, system_prompt))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(pairs.len())
}

pub fn read_training_file(path: &Path) -> io::Result<Vec<TrainingRecord>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)))
        .collect()
}
