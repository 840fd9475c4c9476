//! Per-response metrics and the composite leaderboard score.
//!
//! Every metric degrades to `0.0` and is flagged when its backend fails, so
//! [`Evaluator::evaluate_response`] always returns a complete [`MetricSet`].

mod bertscore;
mod rouge;
mod vocab;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingClient;

pub use bertscore::{bert_score_f1, greedy_f1, rescale, ClientTokenEmbedder, TokenEmbedder};
pub use rouge::{f1_from_lcs, lcs_len, rouge_l_f1, rouge_l_tokens, stemmed_tokens};
pub use vocab::{
    hpc_domain_score, hpc_score_from_matches, response_words, HpcVocabulary, VocabularyError, DEFAULT_VOCABULARY,
    MIN_VOCABULARY_TERMS,
};

/// Number of retrieved documents compared against the response.
pub const RAG_RELEVANCE_DOCS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    CosineSimilarity,
    RougeLF1,
    BertScoreF1,
    HpcDomainScore,
    RagRelevance,
}

impl Metric {
    pub const ALL: [Metric; 5] =
        [Metric::CosineSimilarity, Metric::RougeLF1, Metric::BertScoreF1, Metric::HpcDomainScore, Metric::RagRelevance];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::CosineSimilarity => "cosine_similarity",
            Metric::RougeLF1 => "rouge_l_f1",
            Metric::BertScoreF1 => "bert_score_f1",
            Metric::HpcDomainScore => "hpc_domain_score",
            Metric::RagRelevance => "rag_relevance",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub cosine_similarity: f64,
    pub rouge_l_f1: f64,
    pub bert_score_f1: f64,
    pub hpc_domain_score: f64,
    pub rag_relevance: f64,
    pub latency_seconds: f64,
    pub degraded_flags: BTreeSet<Metric>,
}

impl MetricSet {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::CosineSimilarity => self.cosine_similarity,
            Metric::RougeLF1 => self.rouge_l_f1,
            Metric::BertScoreF1 => self.bert_score_f1,
            Metric::HpcDomainScore => self.hpc_domain_score,
            Metric::RagRelevance => self.rag_relevance,
        }
    }

    fn slot(&mut self, metric: Metric) -> &mut f64 {
        match metric {
            Metric::CosineSimilarity => &mut self.cosine_similarity,
            Metric::RougeLF1 => &mut self.rouge_l_f1,
            Metric::BertScoreF1 => &mut self.bert_score_f1,
            Metric::HpcDomainScore => &mut self.hpc_domain_score,
            Metric::RagRelevance => &mut self.rag_relevance,
        }
    }

    /// Force `metric` to 0.0 and flag it.
    pub fn degrade(&mut self, metric: Metric) {
        *self.slot(metric) = 0.0;
        self.degraded_flags.insert(metric);
    }

    /// Every metric degraded; used when a whole pair fails.
    pub fn all_degraded(latency_seconds: f64) -> Self {
        let mut m = Self { latency_seconds, ..Self::default() };
        for metric in Metric::ALL {
            m.degrade(metric);
        }
        m
    }

    pub fn composite(&self) -> f64 {
        composite_score(self)
    }

    /// Checks the documented ranges and that flagged metrics are exactly 0.
    pub fn validate(&self) -> Result<(), String> {
        let in_range = |v: f64, lo: f64, hi: f64| v.is_finite() && v >= lo - 1e-9 && v <= hi + 1e-9;
        let checks = [
            (Metric::CosineSimilarity, in_range(self.cosine_similarity, -1.0, 1.0)),
            (Metric::RougeLF1, in_range(self.rouge_l_f1, 0.0, 1.0)),
            (Metric::BertScoreF1, self.bert_score_f1.is_finite() && self.bert_score_f1 <= 1.0 + 1e-9),
            (Metric::HpcDomainScore, in_range(self.hpc_domain_score, 0.0, 1.0)),
            (Metric::RagRelevance, in_range(self.rag_relevance, -1.0, 1.0)),
        ];
        for (metric, ok) in checks {
            if !ok {
                return Err(format!("{metric} out of range: {}", self.get(metric)));
            }
        }
        if !(self.latency_seconds.is_finite() && self.latency_seconds >= 0.0) {
            return Err(format!("latency_seconds out of range: {}", self.latency_seconds));
        }
        if let Some(m) = self.degraded_flags.iter().find(|m| self.get(**m) != 0.0) {
            return Err(format!("{m} is flagged degraded but nonzero"));
        }
        Ok(())
    }
}

/// Composite weights, exposed for display.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompositeWeights {
    pub bert_score_f1: f64,
    pub cosine_similarity: f64,
    pub hpc_domain_score: f64,
    pub rouge_l_f1: f64,
    pub latency_penalty: f64,
    pub latency_saturation_seconds: f64,
}

pub const COMPOSITE_WEIGHTS: CompositeWeights = CompositeWeights {
    bert_score_f1: 0.35,
    cosine_similarity: 0.25,
    hpc_domain_score: 0.20,
    rouge_l_f1: 0.10,
    latency_penalty: 0.10,
    latency_saturation_seconds: 20.0,
};

/// `0.35·BERTScore + 0.25·cosine + 0.20·HPC + 0.10·ROUGE-L − 0.10·min(latency/20, 1)`.
/// RAG relevance is reported but not weighted.
pub fn composite_score(m: &MetricSet) -> f64 {
    let w = COMPOSITE_WEIGHTS;
    w.bert_score_f1 * m.bert_score_f1
        + w.cosine_similarity * m.cosine_similarity
        + w.hpc_domain_score * m.hpc_domain_score
        + w.rouge_l_f1 * m.rouge_l_f1
        - w.latency_penalty * (m.latency_seconds / w.latency_saturation_seconds).min(1.0)
}

/// Cosine of two vectors; `None` on zero norm or mismatched dimensions.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Option<f64> {
    bertscore::cosine(a, b)
}

/// Mean cosine between the response and up to three documents; 0.0 with no
/// documents. `None` when the response vector has zero norm. A zero-norm
/// document contributes 0.
pub fn rag_relevance(response: &[f32], documents: &[Vec<f32>]) -> Option<f64> {
    let docs = &documents[..documents.len().min(RAG_RELEVANCE_DOCS)];
    if docs.is_empty() {
        return Some(0.0);
    }
    if response.iter().all(|x| *x == 0.0) {
        return None;
    }
    let sum: f64 = docs.iter().map(|d| cosine_similarity(response, d).unwrap_or(0.0)).sum();
    Some(sum / docs.len() as f64)
}

#[derive(Clone)]
pub struct Evaluator {
    embedder: EmbeddingClient,
    tokens: Arc<dyn TokenEmbedder>,
    vocabulary: Arc<HpcVocabulary>,
    bert_baseline: f64,
}

impl Evaluator {
    /// Token vectors come from the same embedding client.
    pub fn new(embedder: EmbeddingClient, vocabulary: HpcVocabulary) -> Self {
        let tokens = Arc::new(ClientTokenEmbedder(embedder.clone()));
        Self { embedder, tokens, vocabulary: Arc::new(vocabulary), bert_baseline: 0.0 }
    }

    pub fn with_token_embedder(mut self, tokens: Arc<dyn TokenEmbedder>) -> Self {
        self.tokens = tokens;
        self
    }

    /// Baseline for BERTScore rescaling; must be below 1.
    pub fn with_bert_baseline(mut self, baseline: f64) -> Self {
        assert!(baseline < 1.0, "BERTScore baseline must be < 1");
        self.bert_baseline = baseline;
        self
    }

    pub fn vocabulary(&self) -> &HpcVocabulary {
        &self.vocabulary
    }

    /// Scores one response. Cosine compares prompt and response; ROUGE-L and
    /// BERTScore compare against `gold_reference` when given, else the prompt.
    /// Never fails: a metric whose backend errors is 0.0 and flagged.
    pub async fn evaluate_response(
        &self,
        prompt: &str,
        response: &str,
        retrieved: &[String],
        latency_seconds: f64,
        gold_reference: Option<&str>,
    ) -> MetricSet {
        let reference = gold_reference.unwrap_or(prompt);
        let mut m = MetricSet { latency_seconds: latency_seconds.max(0.0), ..MetricSet::default() };
        m.rouge_l_f1 = rouge_l_f1(response, reference);
        m.hpc_domain_score = self.vocabulary.score(response);

        let docs = &retrieved[..retrieved.len().min(RAG_RELEVANCE_DOCS)];
        let mut texts = vec![prompt.to_owned(), response.to_owned()];
        texts.extend(docs.iter().cloned());
        match self.embedder.embed_batch(&texts).await {
            Ok(vectors) => {
                let v: Vec<Vec<f32>> = vectors.into_iter().map(|v| v.into_vec()).collect();
                match cosine_similarity(&v[0], &v[1]) {
                    Some(c) => m.cosine_similarity = c,
                    None => m.degrade(Metric::CosineSimilarity),
                }
                match rag_relevance(&v[1], &v[2..]) {
                    Some(r) => m.rag_relevance = r,
                    None => m.degrade(Metric::RagRelevance),
                }
            }
            Err(e) => {
                tracing::warn!(error = %e, "embedding failed during evaluation");
                m.degrade(Metric::CosineSimilarity);
                m.degrade(Metric::RagRelevance);
            }
        }

        match bert_score_f1(self.tokens.as_ref(), response, reference, self.bert_baseline).await {
            Ok(f) => m.bert_score_f1 = f,
            Err(e) => {
                tracing::warn!(error = %e, "token embedding failed during evaluation");
                m.degrade(Metric::BertScoreF1);
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{EmbeddingBackend, UnavailableEmbeddingBackend};
    use proptest::prelude::*;

    fn metrics(b: f64, c: f64, h: f64, r: f64, lat: f64) -> MetricSet {
        MetricSet {
            bert_score_f1: b,
            cosine_similarity: c,
            hpc_domain_score: h,
            rouge_l_f1: r,
            latency_seconds: lat,
            ..MetricSet::default()
        }
    }

    #[test]
    fn composite_examples() {
        assert!((composite_score(&metrics(1.0, 1.0, 1.0, 1.0, 0.0)) - 0.90).abs() < 1e-12);
        assert!((composite_score(&metrics(1.0, 1.0, 1.0, 1.0, 20.0)) - 0.80).abs() < 1e-12);
        assert!((composite_score(&metrics(1.0, 1.0, 1.0, 1.0, 95.0)) - 0.80).abs() < 1e-12);
        assert!((composite_score(&metrics(0.0, 0.0, 0.0, 0.0, 10.0)) + 0.05).abs() < 1e-12);
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[0.3, 0.4], &[0.3, 0.4]).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine_similarity(&[0.3, 0.4], &[-0.3, -0.4]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]), Some(0.0));
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[0.0, 1.0]), None);
    }

    #[test]
    fn rag_relevance_mean_of_three() {
        let resp = vec![1.0, 0.0];
        let docs = vec![vec![1.0, 0.0], vec![0.5, 0.75f32.sqrt()], vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!((rag_relevance(&resp, &docs).unwrap() - 0.5).abs() < 1e-6);
        assert_eq!(rag_relevance(&resp, &[]), Some(0.0));
    }

    fn stub_evaluator() -> Evaluator {
        Evaluator::new(EmbeddingClient::stub(256), HpcVocabulary::default())
    }

    #[tokio::test]
    async fn healthy_stubs_flag_nothing() {
        let m = stub_evaluator()
            .evaluate_response(
                "How do I submit a job?",
                "Use sbatch job.sh",
                &["sbatch submits jobs".into()],
                1.5,
                None,
            )
            .await;
        assert!(m.degraded_flags.is_empty(), "{:?}", m.degraded_flags);
        m.validate().unwrap();
    }

    #[tokio::test]
    async fn response_equal_to_prompt() {
        let p = "How do I request two GPUs with srun?";
        let m = stub_evaluator().evaluate_response(p, p, &[], 0.0, None).await;
        assert!((m.cosine_similarity - 1.0).abs() < 1e-6);
        assert_eq!(m.rouge_l_f1, 1.0);
        assert!((m.bert_score_f1 - 1.0).abs() < 1e-6);
    }

    #[tokio::test]
    async fn identical_to_sole_document() {
        let doc = "Lustre scratch is purged after 30 days";
        let m = stub_evaluator().evaluate_response("where is scratch", doc, &[doc.into()], 0.0, None).await;
        assert!((m.rag_relevance - 1.0).abs() < 1e-6);
    }

    #[tokio::test]
    async fn gold_reference_overrides_prompt() {
        let m = stub_evaluator().evaluate_response("q", "use squeue", &[], 0.0, Some("use squeue")).await;
        assert_eq!(m.rouge_l_f1, 1.0);
    }

    #[tokio::test]
    async fn embedding_down_isolates_failures() {
        let backend: Arc<dyn EmbeddingBackend> = Arc::new(UnavailableEmbeddingBackend);
        let ev = Evaluator::new(EmbeddingClient::new(backend, 8, 16), HpcVocabulary::default());
        let m = ev.evaluate_response("submit with sbatch", "sbatch and srun", &["doc".into()], 2.0, None).await;
        let want: BTreeSet<Metric> =
            [Metric::CosineSimilarity, Metric::RagRelevance, Metric::BertScoreF1].into_iter().collect();
        assert_eq!(m.degraded_flags, want);
        assert!(m.rouge_l_f1 > 0.0 && m.hpc_domain_score > 0.0);
        m.validate().unwrap();
    }

    fn unit() -> impl Strategy<Value = f64> {
        0.0f64..=1.0
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn composite_monotone(
            b in unit(), c in -1.0f64..=1.0, h in unit(), r in unit(), lat in 0.0f64..60.0,
            db in unit(), dc in unit(), dh in unit(), dr in unit(), dl in 0.0f64..30.0,
        ) {
            let base = composite_score(&metrics(b, c, h, r, lat));
            prop_assert!(composite_score(&metrics(b + db, c, h, r, lat)) >= base);
            prop_assert!(composite_score(&metrics(b, c + dc, h, r, lat)) >= base);
            prop_assert!(composite_score(&metrics(b, c, h + dh, r, lat)) >= base);
            prop_assert!(composite_score(&metrics(b, c, h, r + dr, lat)) >= base);
            prop_assert!(composite_score(&metrics(b, c, h, r, lat + dl)) <= base);
        }

        #[test]
        fn degrade_keeps_set_valid(mask in 0u8..32, lat in 0.0f64..100.0) {
            let mut m = metrics(0.7, 0.5, 0.4, 0.3, lat);
            m.rag_relevance = 0.2;
            for (i, metric) in Metric::ALL.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    m.degrade(*metric);
                }
            }
            prop_assert!(m.validate().is_ok());
            prop_assert_eq!(m.degraded_flags.len(), mask.count_ones() as usize);
        }
    }
}
