//! On-disk layout of an index directory.
//!
//! `index.hnsw` (little-endian):
//!
//! | field            | type                                   |
//! |------------------|----------------------------------------|
//! | magic            | `b"HPCRAGIX"`                          |
//! | version          | `u8` (= 1)                             |
//! | dimension, m, ef_construction, ef_search | `u32` each     |
//! | seed             | `u64`                                  |
//! | node count       | `u64`                                  |
//! | entry point      | `u32` (`u32::MAX` when empty)          |
//! | max level        | `u32`                                  |
//! | per node         | level `u32`; per layer `0..=level`: link count `u32` + links `u32*`; vector `f32 * dimension` |
//! | checksum         | SHA-256 of all preceding bytes         |
//!
//! `records.jsonl`: a header line `{"format":"hpcrag-index-records","version":1,"count":N}`
//! followed by one `{id, source_url, text, fetched_at}` object per node, in node order.
//!
//! Both files are written to temporaries and renamed into place.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::hnsw::Graph;
use super::{IndexConfig, IndexError, RecordMetadata, VectorRecord};

pub const GRAPH_FILE: &str = "index.hnsw";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const INDEX_FORMAT_VERSION: u8 = 1;
const MAGIC: &[u8; 8] = b"HPCRAGIX";
const RECORDS_FORMAT: &str = "hpcrag-index-records";

pub(super) struct Loaded {
    pub dimension: usize,
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
    pub records: Vec<Arc<VectorRecord>>,
    pub graph: Graph,
}

#[derive(Serialize, Deserialize)]
struct RecordsHeader {
    format: String,
    version: u8,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: String,
    source_url: String,
    text: String,
    fetched_at: DateTime<Utc>,
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

pub(super) fn write_dir(
    dir: &Path,
    config: &IndexConfig,
    records: &[Arc<VectorRecord>],
    graph: &Graph,
) -> Result<(), IndexError> {
    fs::create_dir_all(dir)?;

    let mut buf = Vec::with_capacity(64 + records.len() * (config.dimension * 4 + 64));
    buf.extend_from_slice(MAGIC);
    buf.push(INDEX_FORMAT_VERSION);
    put_u32(&mut buf, config.dimension);
    put_u32(&mut buf, graph.m);
    put_u32(&mut buf, graph.ef_construction);
    put_u32(&mut buf, config.hnsw_ef_search);
    buf.extend_from_slice(&config.seed.to_le_bytes());
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    buf.extend_from_slice(&graph.entry.unwrap_or(u32::MAX).to_le_bytes());
    put_u32(&mut buf, graph.max_level);
    for (node, record) in records.iter().enumerate() {
        let layers = &graph.links[node];
        put_u32(&mut buf, layers.len() - 1);
        for links in layers {
            put_u32(&mut buf, links.len());
            for &l in links {
                buf.extend_from_slice(&l.to_le_bytes());
            }
        }
        for x in &record.vector {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let checksum = Sha256::digest(&buf);
    buf.extend_from_slice(&checksum);

    let mut lines = Vec::new();
    serde_json::to_writer(
        &mut lines,
        &RecordsHeader { format: RECORDS_FORMAT.into(), version: INDEX_FORMAT_VERSION, count: records.len() },
    )
    .map_err(std::io::Error::other)?;
    lines.push(b'\n');
    for r in records {
        let line = RecordLine {
            id: r.id.clone(),
            source_url: r.metadata.source_url.clone(),
            text: r.metadata.text.clone(),
            fetched_at: r.metadata.fetched_at,
        };
        serde_json::to_writer(&mut lines, &line).map_err(std::io::Error::other)?;
        lines.push(b'\n');
    }

    atomic_write(&dir.join(RECORDS_FILE), &lines)?;
    atomic_write(&dir.join(GRAPH_FILE), &buf)?;
    Ok(())
}

fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(tmp, path)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| IndexError::Corrupt(format!("graph file truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self) -> Result<usize, IndexError> {
        self.u32().map(|v| v as usize)
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// `Ok(None)` when the directory holds no index.
pub(super) fn read_dir(dir: &Path) -> Result<Option<Loaded>, IndexError> {
    let graph_path = dir.join(GRAPH_FILE);
    let records_path = dir.join(RECORDS_FILE);
    if !graph_path.exists() {
        if records_path.exists() {
            return Err(IndexError::Corrupt(format!("{RECORDS_FILE} present without {GRAPH_FILE}")));
        }
        return Ok(None);
    }
    let bytes = fs::read(&graph_path)?;
    if bytes.len() < MAGIC.len() + 1 + 32 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(IndexError::Corrupt("bad magic or truncated header".into()));
    }
    let version = bytes[MAGIC.len()];
    if version != INDEX_FORMAT_VERSION {
        return Err(IndexError::UnsupportedVersion(version));
    }
    let (payload, checksum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(payload).as_slice() != checksum {
        return Err(IndexError::Corrupt("graph checksum mismatch (truncated or modified file)".into()));
    }

    let mut cur = Cursor { bytes: payload, pos: MAGIC.len() + 1 };
    let dimension = cur.usize()?;
    let m = cur.usize()?;
    let ef_construction = cur.usize()?;
    let ef_search = cur.usize()?;
    let seed = cur.u64()?;
    let count = cur.u64()? as usize;
    let entry = cur.u32()?;
    let max_level = cur.usize()?;

    let metas = read_records(&records_path, count)?;
    let mut graph = Graph::new(m, ef_construction);
    graph.entry = (entry != u32::MAX).then_some(entry);
    graph.max_level = max_level;
    let mut records = Vec::with_capacity(count);
    for (node, meta) in metas.into_iter().enumerate() {
        let level = cur.usize()?;
        if level > 64 {
            return Err(IndexError::Corrupt(format!("node {node}: implausible level {level}")));
        }
        let mut layers = Vec::with_capacity(level + 1);
        for _ in 0..=level {
            let n = cur.usize()?;
            let mut links = Vec::with_capacity(n.min(1024));
            for _ in 0..n {
                let l = cur.u32()?;
                if l as usize >= count {
                    return Err(IndexError::Corrupt(format!("node {node}: link {l} out of range")));
                }
                links.push(l);
            }
            layers.push(links);
        }
        graph.links.push(layers);
        let raw = cur.take(dimension * 4)?;
        let vector = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        records.push(Arc::new(VectorRecord {
            id: meta.id,
            vector,
            metadata: RecordMetadata { source_url: meta.source_url, text: meta.text, fetched_at: meta.fetched_at },
        }));
    }
    if cur.pos != payload.len() {
        return Err(IndexError::Corrupt("trailing bytes in graph file".into()));
    }
    if let Some(e) = graph.entry {
        if e as usize >= count {
            return Err(IndexError::Corrupt("entry point out of range".into()));
        }
    }
    Ok(Some(Loaded { dimension, m, ef_construction, ef_search, seed, records, graph }))
}

fn read_records(path: &Path, count: usize) -> Result<Vec<RecordLine>, IndexError> {
    let file = fs::File::open(path).map_err(|e| IndexError::Corrupt(format!("cannot open {RECORDS_FILE}: {e}")))?;
    let mut lines = BufReader::new(file).lines();
    let header: RecordsHeader = match lines.next() {
        Some(line) => {
            serde_json::from_str(&line?).map_err(|e| IndexError::Corrupt(format!("{RECORDS_FILE} header: {e}")))?
        }
        None => return Err(IndexError::Corrupt(format!("{RECORDS_FILE} is empty"))),
    };
    if header.format != RECORDS_FORMAT {
        return Err(IndexError::Corrupt(format!("unexpected records format {:?}", header.format)));
    }
    if header.version != INDEX_FORMAT_VERSION {
        return Err(IndexError::UnsupportedVersion(header.version));
    }
    if header.count != count {
        return Err(IndexError::Corrupt(format!("graph has {count} nodes but records header says {}", header.count)));
    }
    let mut out = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let rec: RecordLine = serde_json::from_str(&line)
            .map_err(|e| IndexError::Corrupt(format!("{RECORDS_FILE} line {}: {e}", i + 2)))?;
        out.push(rec);
    }
    if out.len() != count {
        return Err(IndexError::Corrupt(format!("expected {count} records, found {}", out.len())));
    }
    Ok(out)
}
