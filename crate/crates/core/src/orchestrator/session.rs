//! Bounded conversation sessions, authoritative in memory and mirrored to
//! one JSON file per session.

use std::collections::{HashMap, VecDeque};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

pub const MAX_TURNS: usize = 10;
pub const DEFAULT_SESSION_TTL_MINUTES: i64 = 60;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub user: String,
    pub assistant: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: Uuid,
    pub turns: VecDeque<Turn>,
    pub created_at: DateTime<Utc>,
    pub last_active: DateTime<Utc>,
}

impl Session {
    pub fn new(session_id: Uuid, now: DateTime<Utc>) -> Self {
        Self { session_id, turns: VecDeque::new(), created_at: now, last_active: now }
    }

    /// Appends a turn, evicting the oldest beyond [`MAX_TURNS`].
    pub fn push(&mut self, turn: Turn) {
        self.last_active = self.last_active.max(turn.timestamp);
        self.turns.push_back(turn);
        while self.turns.len() > MAX_TURNS {
            self.turns.pop_front();
        }
    }

    /// The newest turns, at most `max_turns`, whose combined text fits in
    /// `char_budget`; oldest are dropped first. Returned oldest to newest.
    pub fn history(&self, max_turns: usize, char_budget: usize) -> Vec<Turn> {
        let mut used = 0usize;
        let mut out = Vec::new();
        for turn in self.turns.iter().rev().take(max_turns) {
            let len = turn.user.chars().count() + turn.assistant.chars().count();
            if used + len > char_budget {
                break;
            }
            used += len;
            out.push(turn.clone());
        }
        out.reverse();
        out
    }
}

/// Thread-safe session map. Appends to one session are serialized by that
/// session's lock; different sessions proceed independently.
pub struct SessionStore {
    dir: Option<PathBuf>,
    sessions: RwLock<HashMap<Uuid, Arc<Mutex<Session>>>>,
}

fn session_path(dir: &Path, id: Uuid) -> PathBuf {
    dir.join(format!("{id}.json"))
}

fn write_session(dir: &Path, session: &Session) -> io::Result<()> {
    let path = session_path(dir, session.session_id);
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(session)?)?;
    std::fs::rename(tmp, path)
}

impl SessionStore {
    pub fn in_memory() -> Self {
        Self { dir: None, sessions: RwLock::new(HashMap::new()) }
    }

    /// Opens a persistent store, replaying every `{uuid}.json` in `dir`.
    /// Unreadable files are skipped with a warning.
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut map = HashMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            match std::fs::read(&path)
                .map_err(|e| e.to_string())
                .and_then(|b| serde_json::from_slice::<Session>(&b).map_err(|e| e.to_string()))
            {
                Ok(s) => {
                    map.insert(s.session_id, Arc::new(Mutex::new(s)));
                }
                Err(e) => {
                    tracing::warn!(path = %path.display(), error = %e, "skipping unreadable session file")
                }
            }
        }
        Ok(Self { dir: Some(dir), sessions: RwLock::new(map) })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<Uuid> {
        let mut ids: Vec<Uuid> = self.sessions.read().keys().copied().collect();
        ids.sort();
        ids
    }

    fn handle(&self, id: Uuid) -> Option<Arc<Mutex<Session>>> {
        self.sessions.read().get(&id).cloned()
    }

    fn persist(&self, session: &Session) {
        if let Some(dir) = &self.dir {
            if let Err(e) = write_session(dir, session) {
                tracing::warn!(session = %session.session_id, error = %e, "session not persisted");
            }
        }
    }

    /// Returns `id` (creating that session if unknown) or a fresh UUID.
    /// Either way the session is touched.
    pub fn get_or_create(&self, id: Option<Uuid>) -> Uuid {
        let id = id.unwrap_or_else(Uuid::new_v4);
        let now = Utc::now();
        let handle = {
            let mut map = self.sessions.write();
            Arc::clone(map.entry(id).or_insert_with(|| Arc::new(Mutex::new(Session::new(id, now)))))
        };
        let mut s = handle.lock();
        s.last_active = s.last_active.max(now);
        self.persist(&s);
        id
    }

    pub fn touch(&self, id: Uuid) -> bool {
        let Some(handle) = self.handle(id) else {
            return false;
        };
        let mut s = handle.lock();
        s.last_active = s.last_active.max(Utc::now());
        self.persist(&s);
        true
    }

    pub fn append(&self, id: Uuid, user: impl Into<String>, assistant: impl Into<String>) {
        let now = Utc::now();
        let handle = {
            let mut map = self.sessions.write();
            Arc::clone(map.entry(id).or_insert_with(|| Arc::new(Mutex::new(Session::new(id, now)))))
        };
        let mut s = handle.lock();
        s.push(Turn { user: user.into(), assistant: assistant.into(), timestamp: now });
        self.persist(&s);
    }

    pub fn get(&self, id: Uuid) -> Option<Session> {
        self.handle(id).map(|h| h.lock().clone())
    }

    pub fn history(&self, id: Uuid, max_turns: usize, char_budget: usize) -> Vec<Turn> {
        self.handle(id).map(|h| h.lock().history(max_turns, char_budget)).unwrap_or_default()
    }

    /// Removes sessions idle for longer than `ttl` as of `now`, from memory
    /// and disk. Returns how many were removed.
    pub fn cleanup(&self, now: DateTime<Utc>, ttl: Duration) -> usize {
        let mut map = self.sessions.write();
        let expired: Vec<Uuid> =
            map.iter().filter(|(_, s)| now - s.lock().last_active > ttl).map(|(id, _)| *id).collect();
        for id in &expired {
            map.remove(id);
            if let Some(dir) = &self.dir {
                if let Err(e) = std::fs::remove_file(session_path(dir, *id)) {
                    if e.kind() != io::ErrorKind::NotFound {
                        tracing::warn!(session = %id, error = %e, "session file not removed");
                    }
                }
            }
        }
        expired.len()
    }
}
