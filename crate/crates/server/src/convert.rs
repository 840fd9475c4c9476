//! Engine types to wire types.

use hpcrag_client::types::{
    BenchmarkStatus, LeaderboardRow, Metrics, ModelInfo, QueryResponse, RunState, SessionView, Source, SourceEntry,
    StageIssue, TurnView,
};
use hpcrag_core::generation::{Precision, RunnableModel};
use hpcrag_core::orchestrator::{self as orch, PipelineState, Session, Stage, StageError};
use hpcrag_core::retrieval::SourceCitation;
use hpcrag_core::{MetricSet, ModelSpec, SourceSpec};
use uuid::Uuid;

pub fn stage_name(stage: Stage) -> &'static str {
    match stage {
        Stage::Retrieval => "retrieval",
        Stage::Generation => "generation",
        Stage::Evaluation => "evaluation",
    }
}

pub fn issue(e: &StageError) -> StageIssue {
    StageIssue { stage: stage_name(e.stage).to_owned(), message: e.message.clone() }
}

pub fn metrics(m: &MetricSet) -> Metrics {
    Metrics {
        cosine_similarity: m.cosine_similarity,
        rouge_l_f1: m.rouge_l_f1,
        bert_score_f1: m.bert_score_f1,
        hpc_domain_score: m.hpc_domain_score,
        rag_relevance: m.rag_relevance,
        latency_seconds: m.latency_seconds,
        composite: m.composite(),
        degraded: m.degraded_flags.iter().map(|f| f.as_str().to_owned()).collect(),
    }
}

pub fn sources(state_hits: &[hpcrag_core::ScoredHit]) -> Vec<Source> {
    SourceCitation::from_hits(state_hits)
        .into_iter()
        .map(|c| Source { rank: c.rank, id: c.id, source_url: c.source_url, score: c.score, text: c.text })
        .collect()
}

/// The response for a successful pipeline run. `None` when generation did
/// not produce a result.
pub fn query_response(state: &PipelineState) -> Option<QueryResponse> {
    let g = state.generation.as_ref()?;
    Some(QueryResponse {
        request_id: state.request_id,
        session_id: state.session_id.unwrap_or_else(Uuid::nil),
        answer: g.text.clone(),
        model: g.model_name.clone(),
        finish_reason: g.finish_reason.clone(),
        latency_s: g.latency_seconds,
        sources: sources(&state.retrieved.hits),
        context_degraded: state.context_degraded,
        warnings: state.warnings.iter().map(issue).collect(),
        metrics: state.metrics.as_ref().map(metrics),
    })
}

pub fn run_state(s: orch::RunStatus) -> RunState {
    match s {
        orch::RunStatus::Running => RunState::Running,
        orch::RunStatus::Complete => RunState::Complete,
        orch::RunStatus::Cancelled => RunState::Cancelled,
        orch::RunStatus::Failed => RunState::Failed,
    }
}

pub fn leaderboard_row(e: &orch::LeaderboardEntry) -> LeaderboardRow {
    LeaderboardRow {
        rank: e.rank,
        model: e.model.clone(),
        pairs: e.pairs,
        degraded_pairs: e.degraded_pairs,
        mean_cosine: e.mean_cosine,
        mean_rouge_l: e.mean_rouge_l,
        mean_bert_score_f1: e.mean_bert_score_f1,
        mean_hpc_score: e.mean_hpc_score,
        mean_rag_relevance: e.mean_rag_relevance,
        mean_latency_s: e.mean_latency_s,
        mean_response_words: e.mean_response_words,
        mean_composite: e.mean_composite,
    }
}

pub fn benchmark_status(s: &orch::BenchmarkStatus, board: &[orch::LeaderboardEntry]) -> BenchmarkStatus {
    BenchmarkStatus {
        run_id: s.run_id,
        status: run_state(s.status),
        completed_pairs: s.completed_pairs,
        total_pairs: s.total_pairs,
        models: s.models.clone(),
        prompt_count: s.prompt_count,
        started_at: s.started_at,
        finished_at: s.finished_at,
        error: s.error.clone(),
        leaderboard: board.iter().map(leaderboard_row).collect(),
    }
}

pub fn precision_name(p: Precision) -> &'static str {
    match p {
        Precision::Bf16 => "bf16",
        Precision::Int4 => "int4",
    }
}

pub fn model_info(m: &ModelSpec, runnable: Option<Precision>) -> ModelInfo {
    ModelInfo {
        name: m.name.clone(),
        display_name: m.display_name.clone(),
        parameter_count_label: m.parameter_count_label.clone(),
        bf16_vram_gb: m.bf16_vram_gb,
        int4_vram_gb: m.int4_vram_gb,
        recommended_quant: precision_name(m.recommended_quant).to_owned(),
        tier: m.tier,
        runnable_precision: runnable.map(|p| precision_name(p).to_owned()),
    }
}

pub fn runnable_info(r: &RunnableModel) -> ModelInfo {
    model_info(&r.model, Some(r.precision))
}

pub fn session_view(s: &Session) -> SessionView {
    SessionView {
        session_id: s.session_id,
        created_at: s.created_at,
        last_active: s.last_active,
        turns: s
            .turns
            .iter()
            .map(|t| TurnView { user: t.user.clone(), assistant: t.assistant.clone(), timestamp: t.timestamp })
            .collect(),
    }
}

pub fn source_entry(s: &SourceSpec) -> SourceEntry {
    SourceEntry { url: s.url.to_string(), priority: format!("{:?}", s.priority), crawl_delay: s.crawl_delay }
}
