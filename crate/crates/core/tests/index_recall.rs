use std::collections::HashSet;
use std::time::Instant;

use chrono::Utc;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use hpcrag_core::index::{IndexConfig, RecordMetadata, VectorIndex, VectorRecord};

fn unit_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
        .collect()
}

fn records(vectors: &[Vec<f32>]) -> Vec<VectorRecord> {
    vectors
        .iter()
        .enumerate()
        .map(|(i, v)| VectorRecord {
            id: format!("v{i:05}"),
            vector: v.clone(),
            metadata: RecordMetadata { source_url: format!("mem://{i}"), text: String::new(), fetched_at: Utc::now() },
        })
        .collect()
}

/// Exact top-k by a plain scan, independent of the index code.
fn oracle_top_k(data: &[Vec<f32>], q: &[f32], k: usize) -> Vec<usize> {
    let mut scored: Vec<(f32, usize)> =
        data.iter().enumerate().map(|(i, v)| (v.iter().zip(q).map(|(a, b)| a * b).sum(), i)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, i)| i).collect()
}

#[test]
fn recall_at_5_on_5000_vectors() {
    let start = Instant::now();
    let data = unit_vectors(5000, 64, 1);
    let index = VectorIndex::new(IndexConfig::with_dimension(64));
    index.upsert(records(&data)).unwrap();
    let queries = unit_vectors(200, 64, 2);
    let (mut found, mut total) = (0usize, 0usize);
    for q in &queries {
        let truth: HashSet<String> = oracle_top_k(&data, q, 5).into_iter().map(|i| format!("v{i:05}")).collect();
        let brute: HashSet<String> = index.brute_force_knn(q, 5).unwrap().iter().map(|h| h.record.id.clone()).collect();
        assert_eq!(brute, truth);
        let got = index.query(q, 5).unwrap();
        found += got.iter().filter(|h| truth.contains(&h.record.id)).count();
        total += 5;
    }
    let recall = found as f64 / total as f64;
    let elapsed = start.elapsed();
    println!("recall@5 = {recall:.4} in {elapsed:?}");
    assert!(recall >= 0.95, "recall {recall}");
    assert!(elapsed.as_secs_f64() < 60.0, "{elapsed:?}");
}

#[test]
fn exact_when_ef_covers_index() {
    let data = unit_vectors(100, 64, 3);
    let index = VectorIndex::new(IndexConfig::with_dimension(64));
    index.upsert(records(&data)).unwrap();
    for q in unit_vectors(20, 64, 4) {
        let got: Vec<String> = index.query_with_ef(&q, 10, 100).unwrap().iter().map(|h| h.record.id.clone()).collect();
        let want: Vec<String> = oracle_top_k(&data, &q, 10).into_iter().map(|i| format!("v{i:05}")).collect();
        assert_eq!(got, want);
    }
    for (i, v) in data.iter().enumerate() {
        let top = &index.query(v, 1).unwrap()[0];
        assert_eq!(top.record.id, format!("v{i:05}"));
        assert!((top.score - 1.0).abs() < 1e-6);
    }
}
