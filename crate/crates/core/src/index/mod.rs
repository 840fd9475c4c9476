//! Persistent cosine-similarity vector index.
//!
//! [`VectorIndex`] keeps records in insertion order behind a readers-writer
//! lock, with an HNSW graph for approximate search and
//! [`VectorIndex::brute_force_knn`] for exact search. Records are keyed by
//! content id, so re-inserting a known id is a no-op.
//!
//! Scores follow `score = 1 - cosine_distance`, i.e. the dot product of the
//! L2-normalised vectors. Ties are broken by ascending id.

mod hnsw;
mod persist;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use hnsw::{dot, Graph};
pub use persist::{GRAPH_FILE, INDEX_FORMAT_VERSION, RECORDS_FILE};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("record {id}: vector has dimension {got}, index expects {expected}")]
    DimensionMismatch { id: String, expected: usize, got: usize },
    #[error("record {id}: vector contains non-finite values")]
    NonFinite { id: String },
    #[error("k must be positive")]
    InvalidK,
    #[error("index has no storage path configured")]
    NoStorage,
    #[error("index files are corrupt: {0}")]
    Corrupt(String),
    #[error("unsupported index format version {0}")]
    UnsupportedVersion(u8),
    #[error("index I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub dimension: usize,
    pub hnsw_m: usize,
    pub hnsw_ef_construction: usize,
    pub hnsw_ef_search: usize,
    /// Directory holding the graph file and the records sidecar. `None` keeps
    /// the index in memory only.
    pub storage_path: Option<PathBuf>,
    /// Seed for HNSW level assignment.
    pub seed: u64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            dimension: 1024,
            hnsw_m: 16,
            hnsw_ef_construction: 200,
            hnsw_ef_search: 64,
            storage_path: None,
            seed: 42,
        }
    }
}

impl IndexConfig {
    pub fn with_dimension(dimension: usize) -> Self {
        Self { dimension, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetadata {
    pub source_url: String,
    pub text: String,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorRecord {
    pub id: String,
    pub vector: Vec<f32>,
    pub metadata: RecordMetadata,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredHit {
    pub record: Arc<VectorRecord>,
    pub score: f32,
}

#[derive(Debug, Clone)]
struct Inner {
    records: Vec<Arc<VectorRecord>>,
    by_id: HashMap<String, u32>,
    graph: Graph,
    rng: StdRng,
}

#[derive(Debug)]
pub struct VectorIndex {
    config: IndexConfig,
    inner: RwLock<Inner>,
}

pub(crate) fn normalized(v: &[f32]) -> Vec<f32> {
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        v.iter().map(|x| x / norm).collect()
    } else {
        v.to_vec()
    }
}

fn score_of(query: &[f32], vector: &[f32]) -> f32 {
    dot(query, vector).clamp(-1.0, 1.0)
}

fn rank(hits: &mut Vec<ScoredHit>, k: usize) {
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.record.id.cmp(&b.record.id)));
    hits.truncate(k);
}

impl VectorIndex {
    /// Empty in-memory index (nothing is read from `storage_path`).
    pub fn new(config: IndexConfig) -> Self {
        let inner = Inner {
            records: Vec::new(),
            by_id: HashMap::new(),
            graph: Graph::new(config.hnsw_m, config.hnsw_ef_construction),
            rng: StdRng::seed_from_u64(config.seed),
        };
        Self { config, inner: RwLock::new(inner) }
    }

    /// Open the index at `config.storage_path`, loading it when files exist.
    pub fn open(config: IndexConfig) -> Result<Self, IndexError> {
        let Some(dir) = config.storage_path.clone() else {
            return Ok(Self::new(config));
        };
        let loaded = persist::read_dir(&dir)?;
        match loaded {
            None => Ok(Self::new(config)),
            Some(loaded) => {
                if loaded.dimension != config.dimension {
                    return Err(IndexError::DimensionMismatch {
                        id: format!("<index at {}>", dir.display()),
                        expected: config.dimension,
                        got: loaded.dimension,
                    });
                }
                Ok(Self::from_loaded(IndexConfig { storage_path: Some(dir), ..config }, loaded))
            }
        }
    }

    /// Load an index from `dir` using the parameters stored there. An empty
    /// or missing directory yields an empty index with default parameters.
    pub fn load(dir: &Path) -> Result<Self, IndexError> {
        match persist::read_dir(dir)? {
            None => Ok(Self::new(IndexConfig { storage_path: Some(dir.to_path_buf()), ..IndexConfig::default() })),
            Some(loaded) => {
                let config = IndexConfig {
                    dimension: loaded.dimension,
                    hnsw_m: loaded.m,
                    hnsw_ef_construction: loaded.ef_construction,
                    hnsw_ef_search: loaded.ef_search,
                    storage_path: Some(dir.to_path_buf()),
                    seed: loaded.seed,
                };
                Ok(Self::from_loaded(config, loaded))
            }
        }
    }

    fn from_loaded(config: IndexConfig, loaded: persist::Loaded) -> Self {
        let by_id = loaded.records.iter().enumerate().map(|(i, r)| (r.id.clone(), i as u32)).collect();
        let rng = StdRng::seed_from_u64(config.seed ^ loaded.records.len() as u64);
        let inner = Inner { records: loaded.records, by_id, graph: loaded.graph, rng };
        Self { config, inner: RwLock::new(inner) }
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn dimension(&self) -> usize {
        self.config.dimension
    }

    pub fn len(&self) -> usize {
        self.inner.read().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, id: &str) -> bool {
        self.inner.read().by_id.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<Arc<VectorRecord>> {
        let inner = self.inner.read();
        inner.by_id.get(id).map(|&i| Arc::clone(&inner.records[i as usize]))
    }

    fn validate(&self, record: &VectorRecord) -> Result<(), IndexError> {
        if record.vector.len() != self.config.dimension {
            return Err(IndexError::DimensionMismatch {
                id: record.id.clone(),
                expected: self.config.dimension,
                got: record.vector.len(),
            });
        }
        if record.vector.iter().any(|x| !x.is_finite()) {
            return Err(IndexError::NonFinite { id: record.id.clone() });
        }
        Ok(())
    }

    /// Insert records whose ids are not yet present. Returns how many were
    /// new. The whole batch is validated before anything is inserted; with a
    /// storage path the index is written to disk before returning.
    pub fn upsert(&self, records: Vec<VectorRecord>) -> Result<usize, IndexError> {
        for r in &records {
            self.validate(r)?;
        }
        let mut guard = self.inner.write();
        let inner = &mut *guard;
        let mut added = 0;
        for mut record in records {
            if inner.by_id.contains_key(&record.id) {
                continue;
            }
            record.vector = normalized(&record.vector);
            let node = inner.records.len() as u32;
            inner.by_id.insert(record.id.clone(), node);
            inner.records.push(Arc::new(record));
            let level = inner.graph.random_level(&mut inner.rng);
            let records = &inner.records;
            inner.graph.insert(node, level, |n| records[n as usize].vector.as_slice());
            added += 1;
        }
        if added > 0 {
            if let Some(dir) = &self.config.storage_path {
                persist::write_dir(dir, &self.config, inner.records.as_slice(), &inner.graph)?;
            }
        }
        Ok(added)
    }

    fn prepare_query(&self, vector: &[f32], k: usize) -> Result<Vec<f32>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if vector.len() != self.config.dimension {
            return Err(IndexError::DimensionMismatch {
                id: "<query>".into(),
                expected: self.config.dimension,
                got: vector.len(),
            });
        }
        Ok(normalized(vector))
    }

    /// Approximate top-`k` by HNSW search with `max(ef_search, k)` candidates.
    pub fn query(&self, vector: &[f32], k: usize) -> Result<Vec<ScoredHit>, IndexError> {
        self.query_with_ef(vector, k, self.config.hnsw_ef_search)
    }

    pub fn query_with_ef(&self, vector: &[f32], k: usize, ef_search: usize) -> Result<Vec<ScoredHit>, IndexError> {
        let q = self.prepare_query(vector, k)?;
        let inner = self.inner.read();
        let records = &inner.records;
        let found = inner.graph.search(&q, ef_search.max(k), |n| records[n as usize].vector.as_slice());
        let mut hits: Vec<ScoredHit> = found
            .into_iter()
            .map(|c| {
                let record = Arc::clone(&records[c.node as usize]);
                ScoredHit { score: score_of(&q, &record.vector), record }
            })
            .collect();
        rank(&mut hits, k);
        Ok(hits)
    }

    /// Exact top-`k` by full scan, same score and tie conventions as [`query`](Self::query).
    pub fn brute_force_knn(&self, vector: &[f32], k: usize) -> Result<Vec<ScoredHit>, IndexError> {
        let q = self.prepare_query(vector, k)?;
        let inner = self.inner.read();
        let mut hits: Vec<ScoredHit> =
            inner.records.iter().map(|r| ScoredHit { score: score_of(&q, &r.vector), record: Arc::clone(r) }).collect();
        rank(&mut hits, k);
        Ok(hits)
    }

    /// Write the index to its storage path. Writers are excluded meanwhile.
    pub fn persist(&self) -> Result<(), IndexError> {
        let dir = self.config.storage_path.as_ref().ok_or(IndexError::NoStorage)?;
        self.persist_to(dir)
    }

    pub fn persist_to(&self, dir: &Path) -> Result<(), IndexError> {
        let inner = self.inner.read();
        persist::write_dir(dir, &self.config, &inner.records, &inner.graph)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn record(id: &str, vector: Vec<f32>) -> VectorRecord {
        VectorRecord {
            id: id.to_owned(),
            vector,
            metadata: RecordMetadata {
                source_url: format!("https://docs.test/{id}"),
                text: format!("text of {id}"),
                fetched_at: DateTime::from_timestamp(1_700_000_000, 0).unwrap(),
            },
        }
    }

    fn random_unit(rng: &mut StdRng, dim: usize) -> Vec<f32> {
        normalized(&(0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect::<Vec<_>>())
    }

    fn filled(n: usize, dim: usize, seed: u64) -> (VectorIndex, Vec<Vec<f32>>) {
        let mut rng = StdRng::seed_from_u64(seed);
        let index = VectorIndex::new(IndexConfig::with_dimension(dim));
        let vecs: Vec<_> = (0..n).map(|_| random_unit(&mut rng, dim)).collect();
        let recs = vecs.iter().enumerate().map(|(i, v)| record(&format!("id{i:05}"), v.clone())).collect();
        index.upsert(recs).unwrap();
        (index, vecs)
    }

    #[test]
    fn upsert_is_idempotent() {
        let index = VectorIndex::new(IndexConfig::with_dimension(4));
        let recs: Vec<_> = (0..10).map(|i| record(&format!("r{i}"), vec![i as f32 + 1.0, 1.0, 0.0, 0.0])).collect();
        assert_eq!(index.upsert(recs.clone()).unwrap(), 10);
        assert_eq!(index.upsert(recs).unwrap(), 0);
        assert_eq!(index.len(), 10);
    }

    #[test]
    fn wrong_dimension_rejects_whole_batch() {
        let index = VectorIndex::new(IndexConfig::with_dimension(3));
        let batch = vec![record("ok", vec![1.0, 0.0, 0.0]), record("bad", vec![1.0, 0.0])];
        let err = index.upsert(batch).unwrap_err();
        assert!(matches!(&err, IndexError::DimensionMismatch { id, .. } if id == "bad"));
        assert!(err.to_string().contains("bad"));
        assert!(index.is_empty());
    }

    #[test]
    fn self_query_scores_one() {
        let (index, vecs) = filled(50, 16, 1);
        let hits = index.query(&vecs[7], 3).unwrap();
        assert_eq!(hits[0].record.id, "id00007");
        assert!((hits[0].score - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn orthogonal_query_scores_zero() {
        let index = VectorIndex::new(IndexConfig::with_dimension(4));
        index.upsert(vec![record("a", vec![1.0, 0.0, 0.0, 0.0]), record("b", vec![0.0, 2.0, 0.0, 0.0])]).unwrap();
        for hit in index.query(&[0.0, 0.0, 0.0, 3.0], 5).unwrap() {
            assert!(hit.score.abs() <= 1e-6);
        }
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let index = VectorIndex::new(IndexConfig::with_dimension(2));
        index
            .upsert(vec![record("c", vec![1.0, 0.0]), record("a", vec![1.0, 0.0]), record("b", vec![2.0, 0.0])])
            .unwrap();
        let ids: Vec<_> = index.brute_force_knn(&[1.0, 0.0], 3).unwrap().iter().map(|h| h.record.id.clone()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
        let ids: Vec<_> = index.query(&[1.0, 0.0], 3).unwrap().iter().map(|h| h.record.id.clone()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
    }

    #[test]
    fn single_record_always_returned() {
        let index = VectorIndex::new(IndexConfig::with_dimension(3));
        index.upsert(vec![record("only", vec![0.0, 1.0, 0.0])]).unwrap();
        let hits = index.brute_force_knn(&[1.0, 0.0, 0.0], 4).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].record.id, "only");
    }

    #[test]
    fn k_zero_is_error_and_empty_index_is_empty() {
        let index = VectorIndex::new(IndexConfig::with_dimension(2));
        assert!(matches!(index.query(&[1.0, 0.0], 0), Err(IndexError::InvalidK)));
        assert!(index.query(&[1.0, 0.0], 5).unwrap().is_empty());
    }

    #[test]
    fn exhaustive_ef_matches_brute_force() {
        let (index, _) = filled(100, 32, 7);
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..50 {
            let q = random_unit(&mut rng, 32);
            let exact = index.brute_force_knn(&q, 5).unwrap();
            let approx = index.query_with_ef(&q, 5, index.len()).unwrap();
            assert_eq!(exact, approx);
        }
    }

    #[test]
    fn results_are_monotone_and_bounded() {
        let (index, _) = filled(300, 24, 3);
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..20 {
            let hits = index.query(&random_unit(&mut rng, 24), 10).unwrap();
            assert_eq!(hits.len(), 10);
            for w in hits.windows(2) {
                assert!(w[0].score >= w[1].score);
            }
            assert!(hits.iter().all(|h| (-1.0..=1.0).contains(&h.score)));
        }
    }

    #[test]
    fn persist_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let (index, vecs) = filled(120, 8, 11);
        index.persist_to(dir.path()).unwrap();
        let loaded = VectorIndex::load(dir.path()).unwrap();
        assert_eq!(loaded.len(), 120);
        for v in vecs.iter().take(20) {
            assert_eq!(index.query(v, 5).unwrap(), loaded.query(v, 5).unwrap());
        }

        let graph = dir.path().join(GRAPH_FILE);
        let bytes = std::fs::read(&graph).unwrap();
        std::fs::write(&graph, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(VectorIndex::load(dir.path()), Err(IndexError::Corrupt(_))));
    }

    #[test]
    fn load_from_empty_dir_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(VectorIndex::load(dir.path()).unwrap().is_empty());
        assert!(VectorIndex::load(&dir.path().join("missing")).unwrap().is_empty());
    }

    #[test]
    fn storage_path_makes_upserts_durable() {
        let dir = tempfile::tempdir().unwrap();
        let config = IndexConfig { storage_path: Some(dir.path().to_path_buf()), ..IndexConfig::with_dimension(3) };
        let index = VectorIndex::open(config.clone()).unwrap();
        index.upsert(vec![record("x", vec![1.0, 2.0, 3.0])]).unwrap();
        drop(index);
        let reopened = VectorIndex::open(config).unwrap();
        assert!(reopened.contains("x"));
        assert_eq!(reopened.get("x").unwrap().metadata.text, "text of x");

        let wrong = IndexConfig { storage_path: Some(dir.path().to_path_buf()), ..IndexConfig::with_dimension(4) };
        assert!(matches!(VectorIndex::open(wrong), Err(IndexError::DimensionMismatch { .. })));
    }
}
