//! Machine-readable API description served at `/api/docs` (OpenAPI 3.1).

use serde_json::{json, Map, Value};

pub struct Endpoint {
    pub method: &'static str,
    pub path: &'static str,
    pub summary: &'static str,
    pub request: Option<&'static str>,
    /// Schema name, or a media type for non-JSON bodies.
    pub response: &'static str,
}

const fn ep(
    method: &'static str,
    path: &'static str,
    summary: &'static str,
    request: Option<&'static str>,
    response: &'static str,
) -> Endpoint {
    Endpoint { method, path, summary, request, response }
}

pub const ENDPOINTS: &[Endpoint] = &[
    ep("post", "/api/query", "Answer a question with retrieved context", Some("QueryRequest"), "QueryResponse"),
    ep(
        "post",
        "/api/query/stream",
        "Answer as server-sent events: delta*, then done or error",
        Some("QueryRequest"),
        "text/event-stream",
    ),
    ep("post", "/api/benchmark/start", "Start a benchmark sweep", Some("BenchmarkStartRequest"), "BenchmarkStatus"),
    ep("get", "/api/benchmark", "All benchmark runs, newest first", None, "BenchmarkStatusList"),
    ep("get", "/api/benchmark/{run_id}/status", "Progress and partial leaderboard", None, "BenchmarkStatus"),
    ep("get", "/api/benchmark/{run_id}/leaderboard", "Per-model means ranked by composite", None, "Leaderboard"),
    ep("get", "/api/benchmark/{run_id}/csv", "Result rows written so far", None, "text/csv"),
    ep("post", "/api/benchmark/{run_id}/cancel", "Stop after the pair in flight", None, "BenchmarkStatus"),
    ep(
        "post",
        "/api/feedback",
        "Rate an answer (+1 indexes it, -1 logs nothing)",
        Some("FeedbackRequest"),
        "FeedbackResponse",
    ),
    ep("post", "/api/kb/crawl", "Re-crawl the documentation sources", Some("CrawlRequest"), "CrawlResponse"),
    ep("get", "/api/kb/stats", "Knowledge base size and last crawl", None, "KbStats"),
    ep("get", "/api/kb/sources", "Configured documentation sources", None, "SourceList"),
    ep("get", "/api/models", "Model registry, optionally filtered by ?vram_gb=", None, "ModelList"),
    ep("get", "/api/sessions/{session_id}", "Conversation turns of a session", None, "SessionView"),
    ep("get", "/api/health", "Component-by-component health", None, "Health"),
    ep("get", "/api/config", "Effective configuration and loop counters", None, "Config"),
    ep("get", "/api/docs", "This document", None, "OpenApi"),
];

fn s(t: &str) -> Value {
    json!({ "type": t })
}

fn opt(t: &str) -> Value {
    json!({ "type": [t, "null"] })
}

fn r(name: &str) -> Value {
    json!({ "$ref": format!("#/components/schemas/{name}") })
}

fn arr(items: Value) -> Value {
    json!({ "type": "array", "items": items })
}

fn obj(required: &[&str], props: Value) -> Value {
    json!({ "type": "object", "required": required, "properties": props })
}

fn schemas() -> Value {
    let uuid = json!({ "type": "string", "format": "uuid" });
    let time = json!({ "type": "string", "format": "date-time" });
    let leaderboard_row = obj(
        &["rank", "model", "pairs", "mean_composite"],
        json!({
            "rank": s("integer"), "model": s("string"), "pairs": s("integer"), "degraded_pairs": s("integer"),
            "mean_cosine": s("number"), "mean_rouge_l": s("number"), "mean_bert_score_f1": s("number"),
            "mean_hpc_score": s("number"), "mean_rag_relevance": s("number"), "mean_latency_s": s("number"),
            "mean_response_words": s("number"), "mean_composite": s("number"),
        }),
    );
    let run_state = json!({ "type": "string", "enum": ["running", "complete", "cancelled", "failed"] });
    let crawl_report = obj(
        &["pages_fetched", "pages_failed", "chunks_new", "chunks_skipped_duplicate", "errors", "trigger"],
        json!({
            "pages_fetched": s("integer"), "pages_failed": s("integer"), "chunks_new": s("integer"),
            "chunks_skipped_duplicate": s("integer"),
            "errors": arr(obj(&["url", "reason"], json!({"url": s("string"), "reason": s("string")}))),
            "aborted": opt("string"), "started_at": time, "finished_at": time,
            "trigger": {"type": "string", "enum": ["api", "scheduled"]},
        }),
    );
    let model_info = obj(
        &["name", "display_name", "tier"],
        json!({
            "name": s("string"), "display_name": s("string"), "parameter_count_label": s("string"),
            "bf16_vram_gb": s("number"), "int4_vram_gb": s("number"),
            "recommended_quant": {"type": "string", "enum": ["bf16", "int4"]}, "tier": s("integer"),
            "runnable_precision": {"type": "string", "enum": ["bf16", "int4"]},
        }),
    );
    json!({
        "Error": obj(&["error"], json!({
            "error": obj(&["code", "message"], json!({
                "code": {"type": "string", "enum": [
                    "invalid_request", "not_found", "unknown_model", "generation_unavailable", "generation_timeout",
                    "generation_failed", "stream_disconnected", "crawl_in_progress", "internal_error"
                ]},
                "message": s("string"),
            })),
        })),
        "QueryRequest": obj(&["prompt"], json!({
            "prompt": s("string"), "session_id": uuid, "k": s("integer"), "model": s("string"),
            "use_rag": s("boolean"), "evaluate": s("boolean"), "temperature": s("number"), "max_tokens": s("integer"),
        })),
        "Source": obj(&["rank", "id", "source_url", "score", "text"], json!({
            "rank": s("integer"), "id": s("string"), "source_url": s("string"), "score": s("number"), "text": s("string"),
        })),
        "Metrics": obj(&["composite", "degraded"], json!({
            "cosine_similarity": s("number"), "rouge_l_f1": s("number"), "bert_score_f1": s("number"),
            "hpc_domain_score": s("number"), "rag_relevance": s("number"), "latency_seconds": s("number"),
            "composite": s("number"), "degraded": arr(s("string")),
        })),
        "QueryResponse": obj(&["request_id", "session_id", "answer", "model", "sources", "context_degraded"], json!({
            "request_id": uuid, "session_id": uuid, "answer": s("string"), "model": s("string"),
            "finish_reason": s("string"), "latency_s": s("number"), "sources": arr(r("Source")),
            "context_degraded": s("boolean"),
            "warnings": arr(obj(&["stage", "message"], json!({"stage": s("string"), "message": s("string")}))),
            "metrics": r("Metrics"),
        })),
        "StreamDelta": obj(&["text"], json!({"text": s("string")})),
        "StreamError": obj(&["code", "message", "stage", "request_id", "session_id"], json!({
            "code": s("string"), "message": s("string"), "stage": s("string"), "request_id": uuid, "session_id": uuid,
        })),
        "BenchmarkStartRequest": obj(&["models"], json!({
            "prompts": arr(json!({"oneOf": [s("string"), obj(&["text"], json!({
                "id": s("string"), "text": s("string"), "gold_answer": s("string"),
            }))]})),
            "models": arr(s("string")), "k": s("integer"), "use_rag": s("boolean"),
            "temperature": s("number"), "max_tokens": s("integer"),
        })),
        "LeaderboardRow": leaderboard_row,
        "BenchmarkStatus": obj(&["run_id", "status", "completed_pairs", "total_pairs"], json!({
            "run_id": uuid, "status": run_state, "completed_pairs": s("integer"), "total_pairs": s("integer"),
            "models": arr(s("string")), "prompt_count": s("integer"), "started_at": time,
            "finished_at": {"type": ["string", "null"], "format": "date-time"}, "error": opt("string"),
            "leaderboard": arr(r("LeaderboardRow")),
        })),
        "BenchmarkStatusList": arr(r("BenchmarkStatus")),
        "Leaderboard": obj(&["run_id", "status", "rows"], json!({
            "run_id": uuid, "status": run_state, "completed_pairs": s("integer"), "total_pairs": s("integer"),
            "rows": arr(r("LeaderboardRow")),
        })),
        "FeedbackRequest": obj(&["prompt", "response", "rating"], json!({
            "session_id": uuid, "prompt": s("string"), "response": s("string"),
            "rating": {"type": "integer", "enum": [1, -1]},
        })),
        "FeedbackResponse": obj(&["accepted", "logged", "indexed", "queued"], json!({
            "accepted": s("boolean"), "logged": s("boolean"), "indexed": s("boolean"), "queued": s("boolean"),
            "index_entry_id": opt("string"),
        })),
        "CrawlRequest": obj(&[], json!({
            "urls": arr(s("string")), "max_priority": {"type": "string", "enum": ["P1", "P2", "P3"]},
            "wait": s("boolean"),
        })),
        "CrawlReport": crawl_report,
        "CrawlResponse": obj(&["status", "sources"], json!({
            "status": {"type": "string", "enum": ["started", "completed"]}, "sources": s("integer"),
            "report": r("CrawlReport"),
        })),
        "KbStats": obj(&["records", "dimension", "sources", "crawl_in_progress"], json!({
            "records": s("integer"), "dimension": s("integer"), "storage_path": opt("string"),
            "sources": s("integer"), "crawl_in_progress": s("boolean"), "last_crawl": r("CrawlReport"),
            "feedback_pending": s("integer"),
        })),
        "SourceList": arr(obj(&["url", "priority", "crawl_delay"], json!({
            "url": s("string"), "priority": s("string"), "crawl_delay": s("number"),
        }))),
        "ModelInfo": model_info,
        "ModelList": obj(&["default_model", "models"], json!({
            "default_model": s("string"), "models": arr(r("ModelInfo")),
        })),
        "SessionView": obj(&["session_id", "turns"], json!({
            "session_id": uuid, "created_at": time, "last_active": time,
            "turns": arr(obj(&["user", "assistant", "timestamp"], json!({
                "user": s("string"), "assistant": s("string"), "timestamp": time,
            }))),
        })),
        "Health": obj(&["status", "version", "uptime_s", "components"], json!({
            "status": {"type": "string", "enum": ["ok", "degraded"]}, "version": s("string"), "uptime_s": s("number"),
            "components": {"type": "object", "additionalProperties": obj(&["ok", "detail"], json!({
                "ok": s("boolean"), "detail": s("string"),
            }))},
        })),
        "Config": s("object"),
        "OpenApi": s("object"),
    })
}

fn path_params(path: &str) -> Vec<Value> {
    path.split('/')
        .filter_map(|seg| seg.strip_prefix('{').and_then(|s| s.strip_suffix('}')))
        .map(|name| {
            json!({ "name": name, "in": "path", "required": true, "schema": {"type": "string", "format": "uuid"} })
        })
        .collect()
}

fn content(kind: &str) -> Value {
    if kind.contains('/') {
        json!({ kind: { "schema": {"type": "string"} } })
    } else {
        json!({ "application/json": { "schema": r(kind) } })
    }
}

pub fn openapi() -> Value {
    let mut paths = Map::new();
    for e in ENDPOINTS {
        let mut op = json!({
            "summary": e.summary,
            "operationId": format!("{}_{}", e.method, e.path.trim_start_matches("/api/").replace(['/', '{', '}'], "_")),
            "responses": {
                "200": { "description": "Success", "content": content(e.response) },
                "default": { "description": "Error", "content": content("Error") },
            },
        });
        let params = path_params(e.path);
        if !params.is_empty() {
            op["parameters"] = Value::Array(params);
        }
        if e.path == "/api/models" {
            op["parameters"] = json!([{ "name": "vram_gb", "in": "query", "required": false, "schema": s("number") }]);
        }
        if let Some(req) = e.request {
            op["requestBody"] = json!({ "required": true, "content": content(req) });
        }
        let entry = paths.entry(e.path.to_owned()).or_insert_with(|| json!({}));
        entry[e.method] = op;
    }
    json!({
        "openapi": "3.1.0",
        "info": {
            "title": "hpcrag",
            "version": env!("CARGO_PKG_VERSION"),
            "description": "Retrieval-augmented HPC documentation assistant and model benchmarking service. \
                Errors use the Error schema with a stable code. The stream endpoint emits `delta` events \
                (StreamDelta) in generation order followed by one `done` (QueryResponse) or `error` (StreamError).",
        },
        "paths": paths,
        "components": { "schemas": schemas() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs(v: &Value, out: &mut Vec<String>) {
        match v {
            Value::Object(m) => {
                if let Some(Value::String(r)) = m.get("$ref") {
                    out.push(r.trim_start_matches("#/components/schemas/").to_owned());
                }
                m.values().for_each(|x| refs(x, out));
            }
            Value::Array(a) => a.iter().for_each(|x| refs(x, out)),
            _ => {}
        }
    }

    #[test]
    fn every_reference_resolves() {
        let doc = openapi();
        let mut found = Vec::new();
        refs(&doc, &mut found);
        assert!(!found.is_empty());
        for name in found {
            assert!(doc["components"]["schemas"].get(&name).is_some(), "dangling $ref {name}");
        }
    }

    #[test]
    fn every_endpoint_is_listed_once() {
        let doc = openapi();
        let n: usize = doc["paths"].as_object().unwrap().values().map(|p| p.as_object().unwrap().len()).sum();
        assert_eq!(n, ENDPOINTS.len());
        assert!(doc["paths"]["/api/benchmark/start"]["post"]["requestBody"].is_object());
        assert_eq!(doc["paths"]["/api/sessions/{session_id}"]["get"]["parameters"][0]["name"], "session_id");
    }
}
