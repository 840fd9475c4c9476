//! Greedy token-matching BERTScore over a pluggable token embedder.

use std::collections::HashMap;

use async_trait::async_trait;

use crate::embedding::EmbeddingClient;
use crate::text::alnum_tokens;

/// Maps tokens to vectors, one per input, in order.
#[async_trait]
pub trait TokenEmbedder: Send + Sync {
    async fn embed_tokens(&self, tokens: &[String]) -> Result<Vec<Vec<f32>>, String>;
}

/// Embeds each distinct token as a standalone text through an [`EmbeddingClient`].
#[derive(Debug, Clone)]
pub struct ClientTokenEmbedder(pub EmbeddingClient);

#[async_trait]
impl TokenEmbedder for ClientTokenEmbedder {
    async fn embed_tokens(&self, tokens: &[String]) -> Result<Vec<Vec<f32>>, String> {
        let vectors = self.0.embed_batch(tokens).await.map_err(|e| e.to_string())?;
        Ok(vectors.into_iter().map(|v| v.into_vec()).collect())
    }
}

pub(crate) fn cosine(a: &[f32], b: &[f32]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Greedy matching F1: precision averages each candidate token's best cosine
/// against the reference, recall the reverse. Zero-norm pairs count as 0.
pub fn greedy_f1(candidate: &[Vec<f32>], reference: &[Vec<f32>]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let sim: Vec<Vec<f64>> =
        candidate.iter().map(|c| reference.iter().map(|r| cosine(c, r).unwrap_or(0.0)).collect()).collect();
    let best = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::NEG_INFINITY, f64::max);
    let p = sim.iter().map(|row| best(&mut row.iter().copied())).sum::<f64>() / candidate.len() as f64;
    let r = (0..reference.len()).map(|j| best(&mut sim.iter().map(|row| row[j]))).sum::<f64>() / reference.len() as f64;
    if p + r <= 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// `(f1 - baseline) / (1 - baseline)`; a baseline of 0 leaves `f1` unchanged.
pub fn rescale(f1: f64, baseline: f64) -> f64 {
    (f1 - baseline) / (1.0 - baseline)
}

/// Full BERTScore F1 for two texts. Empty token lists score 0 without
/// touching the embedder.
pub async fn bert_score_f1(
    embedder: &dyn TokenEmbedder,
    candidate: &str,
    reference: &str,
    baseline: f64,
) -> Result<f64, String> {
    let cand = alnum_tokens(candidate);
    let refr = alnum_tokens(reference);
    if cand.is_empty() || refr.is_empty() {
        return Ok(0.0);
    }
    let mut distinct: Vec<String> = cand.iter().chain(&refr).cloned().collect();
    distinct.sort();
    distinct.dedup();
    let vectors = embedder.embed_tokens(&distinct).await?;
    if vectors.len() != distinct.len() {
        return Err(format!("token embedder returned {} vectors for {} tokens", vectors.len(), distinct.len()));
    }
    let table: HashMap<&str, &Vec<f32>> = distinct.iter().map(String::as_str).zip(&vectors).collect();
    let lookup = |toks: &[String]| toks.iter().map(|t| table[t.as_str()].clone()).collect::<Vec<_>>();
    Ok(rescale(greedy_f1(&lookup(&cand), &lookup(&refr)), baseline))
}
