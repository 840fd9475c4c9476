//! Benchmark run bookkeeping: per-run CSV files that grow one row per
//! completed (prompt, model) pair, plus the per-model leaderboard.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::evaluation::{Metric, MetricSet};

pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: [&str; 11] = [
    "prompt_id",
    "model",
    "cosine",
    "rouge_l",
    "bert_score_f1",
    "hpc_score",
    "rag_relevance",
    "latency_s",
    "composite",
    "response_words",
    "degraded",
];
/// Columns that legitimately differ between otherwise identical runs.
pub const TIMING_COLUMNS: [&str; 2] = ["latency_s", "composite"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkPrompt {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
}

impl BenchmarkPrompt {
    /// Numbers prompts `p01`, `p02`, …
    pub fn numbered<I: IntoIterator<Item = S>, S: Into<String>>(texts: I) -> Vec<Self> {
        texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| Self { id: format!("p{:02}", i + 1), text: t.into(), gold_answer: None })
            .collect()
    }
}

pub const DEFAULT_BENCHMARK_PROMPTS: &str = include_str!("../../assets/sample_prompts.txt");

/// The shipped prompt set, one prompt per non-empty line.
pub fn default_prompts() -> Vec<BenchmarkPrompt> {
    BenchmarkPrompt::numbered(DEFAULT_BENCHMARK_PROMPTS.lines().map(str::trim).filter(|l| !l.is_empty()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub prompt_id: String,
    pub model: String,
    pub metrics: MetricSet,
    pub composite: f64,
    pub response_words: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl BenchmarkRecord {
    pub fn csv_fields(&self) -> [String; 11] {
        let m = &self.metrics;
        let degraded: Vec<&str> = m.degraded_flags.iter().map(|f| f.as_str()).collect();
        [
            self.prompt_id.clone(),
            self.model.clone(),
            format!("{:.4}", m.cosine_similarity),
            format!("{:.4}", m.rouge_l_f1),
            format!("{:.4}", m.bert_score_f1),
            format!("{:.4}", m.hpc_domain_score),
            format!("{:.4}", m.rag_relevance),
            format!("{:.2}", m.latency_seconds),
            format!("{:.4}", self.composite),
            self.response_words.to_string(),
            degraded.join(";"),
        ]
    }

    pub fn is_degraded(&self) -> bool {
        !self.metrics.degraded_flags.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkStatus {
    pub run_id: Uuid,
    pub status: RunStatus,
    pub completed_pairs: usize,
    pub total_pairs: usize,
    pub models: Vec<String>,
    pub prompt_count: usize,
    pub csv_path: PathBuf,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub rank: usize,
    pub model: String,
    pub pairs: usize,
    pub degraded_pairs: usize,
    pub mean_cosine: f64,
    pub mean_rouge_l: f64,
    pub mean_bert_score_f1: f64,
    pub mean_hpc_score: f64,
    pub mean_rag_relevance: f64,
    pub mean_latency_s: f64,
    pub mean_response_words: f64,
    pub mean_composite: f64,
}

/// Per-model means ranked by mean composite descending, ties by model name.
pub fn leaderboard(records: &[BenchmarkRecord]) -> Vec<LeaderboardEntry> {
    let mut by_model: BTreeMap<&str, Vec<&BenchmarkRecord>> = BTreeMap::new();
    for r in records {
        by_model.entry(&r.model).or_default().push(r);
    }
    let mut entries: Vec<LeaderboardEntry> = by_model
        .into_iter()
        .map(|(model, rows)| {
            let n = rows.len() as f64;
            let mean = |f: &dyn Fn(&BenchmarkRecord) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
            LeaderboardEntry {
                rank: 0,
                model: model.to_owned(),
                pairs: rows.len(),
                degraded_pairs: rows.iter().filter(|r| r.is_degraded()).count(),
                mean_cosine: mean(&|r| r.metrics.cosine_similarity),
                mean_rouge_l: mean(&|r| r.metrics.rouge_l_f1),
                mean_bert_score_f1: mean(&|r| r.metrics.bert_score_f1),
                mean_hpc_score: mean(&|r| r.metrics.hpc_domain_score),
                mean_rag_relevance: mean(&|r| r.metrics.rag_relevance),
                mean_latency_s: mean(&|r| r.metrics.latency_seconds),
                mean_response_words: mean(&|r| r.response_words as f64),
                mean_composite: mean(&|r| r.composite),
            }
        })
        .collect();
    entries.sort_by(|a, b| b.mean_composite.total_cmp(&a.mean_composite).then_with(|| a.model.cmp(&b.model)));
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    entries
}

struct RunState {
    status: RunStatus,
    records: Vec<BenchmarkRecord>,
    writer: Option<csv::Writer<File>>,
    finished_at: Option<DateTime<Utc>>,
    error: Option<String>,
}

/// One run. Row append, flush and the completed count change under a
/// single lock, so readers never see them disagree.
pub struct BenchmarkRun {
    pub run_id: Uuid,
    pub prompts: Vec<BenchmarkPrompt>,
    pub models: Vec<String>,
    pub csv_path: PathBuf,
    pub started_at: DateTime<Utc>,
    cancel: AtomicBool,
    state: Mutex<RunState>,
}

impl BenchmarkRun {
    fn create(dir: &Path, prompts: Vec<BenchmarkPrompt>, models: Vec<String>) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let run_id = Uuid::new_v4();
        let csv_path = dir.join(format!("{run_id}.csv"));
        let mut writer = csv::Writer::from_path(&csv_path).map_err(io::Error::other)?;
        writer.write_record(CSV_HEADER).map_err(io::Error::other)?;
        writer.flush()?;
        Ok(Self {
            run_id,
            prompts,
            models,
            csv_path,
            started_at: Utc::now(),
            cancel: AtomicBool::new(false),
            state: Mutex::new(RunState {
                status: RunStatus::Running,
                records: Vec::new(),
                writer: Some(writer),
                finished_at: None,
                error: None,
            }),
        })
    }

    pub fn total_pairs(&self) -> usize {
        self.prompts.len() * self.models.len()
    }

    pub fn cancel_requested(&self) -> bool {
        self.cancel.load(Ordering::SeqCst)
    }

    pub fn request_cancel(&self) {
        self.cancel.store(true, Ordering::SeqCst);
    }

    /// Writes and flushes one row, then counts it.
    pub fn push_record(&self, record: BenchmarkRecord) -> io::Result<()> {
        let mut st = self.state.lock();
        let writer = st.writer.as_mut().ok_or_else(|| io::Error::other("run already finished"))?;
        writer.write_record(record.csv_fields()).map_err(io::Error::other)?;
        writer.flush()?;
        st.records.push(record);
        Ok(())
    }

    pub fn finish(&self, status: RunStatus, error: Option<String>) {
        let mut st = self.state.lock();
        if let Some(mut w) = st.writer.take() {
            let _ = w.flush();
        }
        st.status = status;
        st.error = error;
        st.finished_at = Some(Utc::now());
    }

    pub fn status(&self) -> BenchmarkStatus {
        let st = self.state.lock();
        BenchmarkStatus {
            run_id: self.run_id,
            status: st.status,
            completed_pairs: st.records.len(),
            total_pairs: self.total_pairs(),
            models: self.models.clone(),
            prompt_count: self.prompts.len(),
            csv_path: self.csv_path.clone(),
            started_at: self.started_at,
            finished_at: st.finished_at,
            error: st.error.clone(),
        }
    }

    pub fn records(&self) -> Vec<BenchmarkRecord> {
        self.state.lock().records.clone()
    }

    pub fn leaderboard(&self) -> Vec<LeaderboardEntry> {
        leaderboard(&self.state.lock().records)
    }

    /// Completed count and CSV file contents read under the same lock.
    pub fn snapshot_csv(&self) -> io::Result<(usize, String)> {
        let st = self.state.lock();
        let text = std::fs::read_to_string(&self.csv_path)?;
        Ok((st.records.len(), text))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchmarkError {
    #[error("a benchmark needs at least one prompt")]
    NoPrompts,
    #[error("a benchmark needs at least one model")]
    NoModels,
    #[error("unknown benchmark run {0}")]
    UnknownRun(Uuid),
    #[error("cannot create benchmark output: {0}")]
    Io(#[from] io::Error),
}

pub struct BenchmarkManager {
    dir: PathBuf,
    runs: RwLock<HashMap<Uuid, Arc<BenchmarkRun>>>,
}

impl BenchmarkManager {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), runs: RwLock::new(HashMap::new()) }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn create(
        &self,
        prompts: Vec<BenchmarkPrompt>,
        models: Vec<String>,
    ) -> Result<Arc<BenchmarkRun>, BenchmarkError> {
        if prompts.is_empty() {
            return Err(BenchmarkError::NoPrompts);
        }
        if models.is_empty() {
            return Err(BenchmarkError::NoModels);
        }
        let run = Arc::new(BenchmarkRun::create(&self.dir, prompts, models)?);
        self.runs.write().insert(run.run_id, Arc::clone(&run));
        Ok(run)
    }

    pub fn get(&self, run_id: Uuid) -> Result<Arc<BenchmarkRun>, BenchmarkError> {
        self.runs.read().get(&run_id).cloned().ok_or(BenchmarkError::UnknownRun(run_id))
    }

    pub fn list(&self) -> Vec<BenchmarkStatus> {
        let mut v: Vec<BenchmarkStatus> = self.runs.read().values().map(|r| r.status()).collect();
        v.sort_by_key(|s| s.started_at);
        v
    }
}

/// Parses a benchmark CSV, dropping the timing columns; used to compare runs.
pub fn csv_without_timing(text: &str) -> Result<Vec<Vec<String>>, csv::Error> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let keep: Vec<usize> =
        headers.iter().enumerate().filter(|(_, h)| !TIMING_COLUMNS.contains(h)).map(|(i, _)| i).collect();
    let mut rows = vec![keep.iter().map(|&i| headers[i].to_owned()).collect()];
    for rec in reader.records() {
        let rec = rec?;
        rows.push(keep.iter().map(|&i| rec[i].to_owned()).collect());
    }
    Ok(rows)
}

/// Degraded names as written in the CSV, back to metrics.
pub fn parse_degraded(field: &str) -> Vec<Metric> {
    field.split(';').filter_map(|name| Metric::ALL.into_iter().find(|m| m.as_str() == name)).collect()
}
