//! Rated Q&A events: +1 goes to the audit/training file and the index,
//! −1 is logged only.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::corpus::content_id;
use crate::embedding::EmbeddingClient;
use crate::index::{RecordMetadata, VectorIndex, VectorRecord};

pub const FEEDBACK_FILE: &str = "conversation_feedback.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Rating {
    Up,
    Down,
}

impl TryFrom<i8> for Rating {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, String> {
        match v {
            1 => Ok(Rating::Up),
            -1 => Ok(Rating::Down),
            other => Err(format!("rating must be +1 or -1, got {other}")),
        }
    }
}

impl From<Rating> for i8 {
    fn from(r: Rating) -> i8 {
        match r {
            Rating::Up => 1,
            Rating::Down => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub session_id: Option<Uuid>,
    pub prompt: String,
    pub response: String,
    pub rating: Rating,
    pub timestamp: DateTime<Utc>,
}

/// One line of the feedback file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub question: String,
    pub answer: String,
    pub rating: Rating,
    pub session_id: Option<Uuid>,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackAck {
    pub accepted: bool,
    /// A JSONL line was written.
    pub logged: bool,
    /// The pair is (now or already) in the index.
    pub indexed: bool,
    /// Index ingestion failed and will be retried.
    pub queued: bool,
    pub index_entry_id: Option<String>,
}

/// Text stored in the index for a rated pair.
pub fn feedback_document(question: &str, answer: &str) -> String {
    format!("Q: {question}\nA: {answer}")
}

pub fn feedback_source_url(session_id: Option<Uuid>) -> String {
    match session_id {
        Some(id) => format!("feedback://{id}"),
        None => "feedback://anonymous".to_owned(),
    }
}

pub struct FeedbackLoop {
    path: PathBuf,
    file_lock: Mutex<()>,
    embedder: EmbeddingClient,
    index: Arc<VectorIndex>,
    pending: Mutex<Vec<FeedbackEvent>>,
}

impl FeedbackLoop {
    pub fn new(path: impl Into<PathBuf>, embedder: EmbeddingClient, index: Arc<VectorIndex>) -> Self {
        Self { path: path.into(), file_lock: Mutex::new(()), embedder, index, pending: Mutex::new(Vec::new()) }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn pending_len(&self) -> usize {
        self.pending.lock().len()
    }

    fn append_line(&self, record: &FeedbackRecord) -> io::Result<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        let _guard = self.file_lock.lock();
        if let Some(parent) = self.path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(line.as_bytes())?;
        f.flush()
    }

    async fn ingest(&self, event: &FeedbackEvent) -> Result<String, String> {
        let text = feedback_document(&event.prompt, &event.response);
        let id = content_id(&text);
        if self.index.contains(&id) {
            return Ok(id);
        }
        let vector = self.embedder.embed(&text).await.map_err(|e| e.to_string())?.into_vec();
        let record = VectorRecord {
            id: id.clone(),
            vector,
            metadata: RecordMetadata {
                source_url: feedback_source_url(event.session_id),
                text,
                fetched_at: event.timestamp,
            },
        };
        let index = Arc::clone(&self.index);
        tokio::task::spawn_blocking(move || index.upsert(vec![record]))
            .await
            .map_err(|e| e.to_string())?
            .map_err(|e| e.to_string())?;
        Ok(id)
    }

    /// Records one event. Never fails: a file or index error is reported in
    /// the acknowledgement and index failures are queued for retry.
    pub async fn record(&self, event: FeedbackEvent) -> FeedbackAck {
        self.retry_pending().await;
        if event.rating == Rating::Down {
            tracing::info!(session = ?event.session_id, prompt = %event.prompt, "negative feedback");
            return FeedbackAck { accepted: true, ..FeedbackAck::default() };
        }
        let record = FeedbackRecord {
            question: event.prompt.clone(),
            answer: event.response.clone(),
            rating: event.rating,
            session_id: event.session_id,
            timestamp: event.timestamp,
        };
        let logged = match self.append_line(&record) {
            Ok(()) => true,
            Err(e) => {
                tracing::error!(path = %self.path.display(), error = %e, "feedback line not written");
                false
            }
        };
        match self.ingest(&event).await {
            Ok(id) => FeedbackAck { accepted: true, logged, indexed: true, queued: false, index_entry_id: Some(id) },
            Err(e) => {
                tracing::warn!(error = %e, "feedback ingestion failed, queued for retry");
                self.pending.lock().push(event);
                FeedbackAck { accepted: true, logged, indexed: false, queued: true, index_entry_id: None }
            }
        }
    }

    /// Retries queued ingestions; returns how many succeeded.
    pub async fn retry_pending(&self) -> usize {
        let queued = std::mem::take(&mut *self.pending.lock());
        let mut done = 0;
        let mut still = Vec::new();
        for event in queued {
            match self.ingest(&event).await {
                Ok(_) => done += 1,
                Err(_) => still.push(event),
            }
        }
        if !still.is_empty() {
            self.pending.lock().extend(still);
        }
        done
    }
}

/// Reads every record of a feedback file.
pub fn read_feedback_file(path: &Path) -> io::Result<Vec<FeedbackRecord>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)))
        .collect()
}
