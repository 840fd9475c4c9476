mod common;

use std::time::Duration;

use common::*;
use hpcrag_client::types::*;
use hpcrag_client::ClientError;
use hpcrag_core::generation::StubChatBackend;
use hpcrag_server::docs::ENDPOINTS;
use uuid::Uuid;

fn api_code(e: &ClientError) -> (u16, &str) {
    match e {
        ClientError::Api { status, code, .. } => (*status, code.as_str()),
        other => panic!("expected an API error, got {other:?}"),
    }
}

#[tokio::test]
async fn query_returns_answer_sources_and_a_fresh_session() {
    let site = fixture_site(0).await;
    let s = stub_server().await;
    seed(&s, site).await;

    let r = s.client.query(&QueryRequest::new("How do I submit a batch job with sbatch?")).await.unwrap();
    assert!(r.answer.starts_with("You asked:"), "{}", r.answer);
    assert!(!r.context_degraded);
    assert!(!r.sources.is_empty());
    assert!(r.sources[0].source_url.ends_with("/docs/sbatch"), "{:?}", r.sources[0]);
    assert_eq!(r.sources[0].rank, 1);
    assert_ne!(r.session_id, Uuid::nil());
    assert!(r.metrics.is_none());

    let again = s
        .client
        .query(&QueryRequest { session_id: Some(r.session_id), evaluate: Some(true), ..QueryRequest::new("And GPUs?") })
        .await
        .unwrap();
    assert_eq!(again.session_id, r.session_id);
    let m = again.metrics.expect("evaluate=true returns metrics");
    assert!(m.degraded.is_empty(), "{m:?}");
    assert!((-0.1..=0.9).contains(&m.composite));

    let view = s.client.session(r.session_id).await.unwrap();
    assert_eq!(view.turns.len(), 2);
    assert_eq!(view.turns[1].user, "And GPUs?");
}

#[tokio::test]
async fn use_rag_false_skips_retrieval() {
    let site = fixture_site(0).await;
    let s = stub_server().await;
    seed(&s, site).await;
    let r = s.client.query(&QueryRequest { use_rag: Some(false), ..QueryRequest::new("sbatch?") }).await.unwrap();
    assert!(r.sources.is_empty());
    assert!(!r.context_degraded);
}

#[tokio::test]
async fn stream_deltas_concatenate_to_the_final_answer() {
    let s =
        server_with_backend(StubChatBackend::fixed("Use sbatch to submit the job script.").with_delta_count(4), vec![])
            .await;
    let stream = s.client.query_stream(&QueryRequest::new("how to submit?")).await.unwrap();
    let header_session = stream.session_id.expect("session header");
    assert!(stream.request_id.is_some());
    let (deltas, terminal) = stream.collect().await.unwrap();
    assert_eq!(deltas.len(), 4);
    let Some(StreamEvent::Done(done)) = terminal else { panic!("expected done, got {terminal:?}") };
    assert_eq!(deltas.concat(), done.answer);
    assert_eq!(done.answer, "Use sbatch to submit the job script.");
    assert_eq!(done.session_id, header_session);
    assert_eq!(s.client.session(header_session).await.unwrap().turns.len(), 1);
}

#[tokio::test]
async fn stream_disconnect_is_an_error_event_and_leaves_the_session_alone() {
    let s = server_with_backend(
        StubChatBackend::fixed("one two three four five six").with_delta_count(6).disconnect_after(2),
        vec![],
    )
    .await;
    let stream = s.client.query_stream(&QueryRequest::new("q")).await.unwrap();
    let sid = stream.session_id.unwrap();
    let (deltas, terminal) = stream.collect().await.unwrap();
    assert_eq!(deltas.len(), 2);
    let Some(StreamEvent::Error(e)) = terminal else { panic!("expected error, got {terminal:?}") };
    assert_eq!(e.code, codes::STREAM_DISCONNECTED);
    assert_eq!(e.stage, "generation");
    assert_eq!(e.session_id, sid);
    assert!(s.client.session(sid).await.unwrap().turns.is_empty());
}

#[tokio::test]
async fn generation_failures_map_to_stable_codes() {
    let s = server_with_backend(StubChatBackend::echo().with_known_models(["stub-model"]), vec![]).await;
    let e = s.client.query(&QueryRequest { model: Some("nope".into()), ..QueryRequest::new("q") }).await.unwrap_err();
    assert_eq!(api_code(&e), (400, codes::UNKNOWN_MODEL));

    let s = server_with_backend(StubChatBackend::echo().unavailable(), vec![]).await;
    let e = s.client.query(&QueryRequest::new("q")).await.unwrap_err();
    assert_eq!(api_code(&e), (503, codes::GENERATION_UNAVAILABLE));
    let stream = s.client.query_stream(&QueryRequest::new("q")).await.unwrap();
    let (_, terminal) = stream.collect().await.unwrap();
    assert!(matches!(terminal, Some(StreamEvent::Error(ref e)) if e.code == codes::GENERATION_UNAVAILABLE));
}

#[tokio::test]
async fn bad_requests_get_the_error_envelope() {
    let s = stub_server().await;
    let e = s.client.query(&QueryRequest::new("   ")).await.unwrap_err();
    assert_eq!(api_code(&e), (400, codes::INVALID_REQUEST));
    let e = s.client.query(&QueryRequest { k: Some(0), ..QueryRequest::new("q") }).await.unwrap_err();
    assert_eq!(api_code(&e), (400, codes::INVALID_REQUEST));
    let e = s.client.query(&QueryRequest { temperature: Some(9.0), ..QueryRequest::new("q") }).await.unwrap_err();
    assert_eq!(api_code(&e), (400, codes::INVALID_REQUEST));

    let http = reqwest::Client::new();
    for (method, path, body) in [
        ("POST", "/api/query", "{not json"),
        ("POST", "/api/query", r#"{"question": "wrong field"}"#),
        ("POST", "/api/feedback", r#"{"prompt":"p","response":"r","rating":0}"#),
        ("GET", "/api/benchmark/not-a-uuid/status", ""),
        ("GET", "/api/models?vram_gb=-4", ""),
        ("POST", "/api/kb/crawl", r#"{"max_priority":"P9"}"#),
    ] {
        let req = http.request(method.parse().unwrap(), s.url(path)).header("content-type", "application/json");
        let resp = req.body(body.to_owned()).send().await.unwrap();
        assert_eq!(resp.status(), 400, "{method} {path}");
        let b: ErrorBody = resp.json().await.unwrap();
        assert_eq!(b.error.code, codes::INVALID_REQUEST, "{method} {path}");
    }

    let resp = http.get(s.url("/api/nothing-here")).send().await.unwrap();
    assert_eq!(resp.status(), 404);
    assert_eq!(resp.json::<ErrorBody>().await.unwrap().error.code, codes::NOT_FOUND);
    let resp = http.delete(s.url("/api/query")).send().await.unwrap();
    assert_eq!(resp.status(), 405);
    assert_eq!(resp.json::<ErrorBody>().await.unwrap().error.code, codes::INVALID_REQUEST);

    let e = s.client.benchmark_status(Uuid::new_v4()).await.unwrap_err();
    assert_eq!(api_code(&e), (404, codes::NOT_FOUND));
    let e = s.client.session(Uuid::new_v4()).await.unwrap_err();
    assert_eq!(api_code(&e), (404, codes::NOT_FOUND));
}

#[tokio::test]
async fn every_documented_endpoint_is_routed() {
    let s = stub_server().await;
    let http = reqwest::Client::new();
    let nil = Uuid::nil().to_string();
    for e in ENDPOINTS {
        let path = e.path.replace("{run_id}", &nil).replace("{session_id}", &nil);
        let req = http.request(e.method.to_uppercase().parse().unwrap(), s.url(&path));
        let req = if e.method == "post" { req.json(&serde_json::json!({})) } else { req };
        let resp = req.send().await.unwrap();
        let status = resp.status().as_u16();
        assert_ne!(status, 405, "{} {}", e.method, e.path);
        if status == 404 {
            let body: ErrorBody = resp.json().await.unwrap();
            assert_ne!(body.error.message, "no such endpoint", "{} {}", e.method, e.path);
        }
    }
    let doc = s.client.api_docs().await.unwrap();
    assert_eq!(doc["openapi"], "3.1.0");
    assert!(doc["paths"]["/api/query/stream"]["post"].is_object());
}

async fn poll_until_done(s: &TestServer, run: Uuid) -> Vec<(usize, usize)> {
    let mut polls = Vec::new();
    loop {
        let csv = s.client.benchmark_csv(run).await.unwrap();
        let rows = csv.text.lines().skip(1).filter(|l| !l.is_empty()).count();
        polls.push((rows, csv.completed_pairs));
        let st = s.client.benchmark_status(run).await.unwrap();
        if st.status.is_terminal() && st.completed_pairs == rows {
            return polls;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
}

#[tokio::test]
async fn benchmark_runs_in_the_background_and_streams_rows() {
    let backend = StubChatBackend::per_model([
        ("model-a", "Submit with sbatch, launch steps with srun and pick a partition."),
        ("model-b", "I am not sure."),
    ])
    .with_delay(Duration::from_millis(2));
    let s = server_with_backend(backend, vec![]).await;
    let started = s
        .client
        .start_benchmark(&BenchmarkStartRequest {
            models: vec!["model-a".into(), "model-b".into()],
            ..Default::default()
        })
        .await
        .unwrap();
    assert_eq!(started.total_pairs, 40);
    assert_eq!(started.prompt_count, 20);

    let polls = poll_until_done(&s, started.run_id).await;
    for (rows, completed) in &polls {
        assert_eq!(rows, completed);
    }
    let fin = s.client.wait_benchmark(started.run_id, Duration::from_millis(10)).await.unwrap();
    assert_eq!(fin.status, RunState::Complete);
    assert_eq!(fin.completed_pairs, 40);

    let board = s.client.leaderboard(started.run_id).await.unwrap();
    assert_eq!(board.rows.len(), 2);
    assert_eq!(board.rows[0].model, "model-a");
    assert!(board.rows[0].mean_composite >= board.rows[1].mean_composite);
    assert_eq!(fin.leaderboard, board.rows);

    let csv = s.client.benchmark_csv(started.run_id).await.unwrap();
    let mut reader = csv::Reader::from_reader(csv.text.as_bytes());
    let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 40);
    assert_eq!(&records[0][0], "p01");
    assert_eq!(&records[0][1], "model-a");
    assert_eq!(&records[1][1], "model-b");

    let listed = s.client.list_benchmarks().await.unwrap();
    assert!(listed.iter().any(|r| r.run_id == started.run_id));
}

#[tokio::test]
async fn benchmark_accepts_custom_prompts_and_can_be_cancelled() {
    let s = server_with_backend(StubChatBackend::echo().with_delay(Duration::from_millis(50)), vec![]).await;
    let prompts: Vec<PromptInput> = (0..30)
        .map(|i| PromptInput::Full { id: Some(format!("q{i}")), text: format!("question {i}"), gold_answer: None })
        .collect();
    let started = s
        .client
        .start_benchmark(&BenchmarkStartRequest {
            prompts: Some(prompts),
            models: vec!["m".into()],
            ..Default::default()
        })
        .await
        .unwrap();
    assert_eq!(started.total_pairs, 30);
    tokio::time::sleep(Duration::from_millis(120)).await;
    s.client.cancel_benchmark(started.run_id).await.unwrap();
    let fin = s.client.wait_benchmark(started.run_id, Duration::from_millis(10)).await.unwrap();
    assert_eq!(fin.status, RunState::Cancelled);
    assert!(fin.completed_pairs < 30);
    let csv = s.client.benchmark_csv(started.run_id).await.unwrap();
    assert_eq!(csv.completed_pairs, fin.completed_pairs);

    let e = s.client.start_benchmark(&BenchmarkStartRequest::default()).await.unwrap_err();
    assert_eq!(api_code(&e), (400, codes::INVALID_REQUEST));
    let dup = vec![
        PromptInput::Text("a".into()),
        PromptInput::Full { id: Some("p01".into()), text: "b".into(), gold_answer: None },
    ];
    let e = s
        .client
        .start_benchmark(&BenchmarkStartRequest { prompts: Some(dup), models: vec!["m".into()], ..Default::default() })
        .await
        .unwrap_err();
    assert_eq!(api_code(&e), (400, codes::INVALID_REQUEST));
}

#[tokio::test]
async fn positive_feedback_is_indexed_once() {
    let s = stub_server().await;
    let before = s.client.kb_stats().await.unwrap().records;
    let up = FeedbackRequest {
        session_id: None,
        prompt: "How do I check my scratch quota?".into(),
        response: "Run lfs quota -u $USER /scratch.".into(),
        rating: 1,
    };
    let ack = s.client.feedback(&up).await.unwrap();
    assert!(ack.accepted && ack.logged && ack.indexed && !ack.queued);
    let id = ack.index_entry_id.clone().unwrap();
    assert_eq!(s.client.kb_stats().await.unwrap().records, before + 1);

    let again = s.client.feedback(&up).await.unwrap();
    assert_eq!(again.index_entry_id.as_deref(), Some(id.as_str()));
    assert_eq!(s.client.kb_stats().await.unwrap().records, before + 1);

    let down = s.client.feedback(&FeedbackRequest { rating: -1, ..up.clone() }).await.unwrap();
    assert!(down.accepted && !down.logged && !down.indexed);
    assert_eq!(s.client.kb_stats().await.unwrap().records, before + 1);

    let r = s.client.query(&QueryRequest::new("How do I check my scratch quota?")).await.unwrap();
    assert_eq!(r.sources[0].id, id);
}

#[tokio::test]
async fn crawl_is_idempotent_and_single_instance() {
    let site = fixture_site(1500).await;
    let s = stub_server().await;
    seed(&s, site).await;
    let records = s.client.kb_stats().await.unwrap().records;
    let second = s
        .client
        .crawl(&CrawlRequest { urls: Some(page_urls(site)), max_priority: None, wait: true })
        .await
        .unwrap()
        .report
        .unwrap();
    assert_eq!(second.chunks_new, 0);
    assert_eq!(second.trigger, "api");
    assert_eq!(s.client.kb_stats().await.unwrap().records, records);

    let slow = CrawlRequest { urls: Some(vec![format!("http://{site}/slow")]), max_priority: None, wait: false };
    let started = s.client.crawl(&slow).await.unwrap();
    assert_eq!(started.status, CrawlState::Started);
    assert!(s.client.kb_stats().await.unwrap().crawl_in_progress);
    let e = s.client.crawl(&slow).await.unwrap_err();
    assert_eq!(api_code(&e), (409, codes::CRAWL_IN_PROGRESS));
    for _ in 0..100 {
        if !s.client.kb_stats().await.unwrap().crawl_in_progress {
            break;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    let stats = s.client.kb_stats().await.unwrap();
    assert!(!stats.crawl_in_progress);
    assert_eq!(stats.records, records + 1);
    assert_eq!(stats.last_crawl.unwrap().pages_fetched, 1);
}

#[tokio::test]
async fn failed_pages_are_reported_not_fatal() {
    let site = fixture_site(0).await;
    let s = stub_server().await;
    let mut urls = page_urls(site);
    urls.push(format!("http://{site}/docs/missing"));
    urls.push(dead_url("/x"));
    let report = s.client.crawl(&CrawlRequest { urls: Some(urls), max_priority: None, wait: true }).await.unwrap();
    let report = report.report.unwrap();
    assert_eq!(report.pages_fetched, 3);
    assert_eq!(report.pages_failed, 2);
    assert_eq!(report.errors.len(), 2);
}

#[tokio::test]
async fn models_are_listed_and_filtered_by_vram() {
    let s = stub_server().await;
    let all = s.client.models(None).await.unwrap();
    assert_eq!(all.models.len(), 9);
    assert_eq!(all.default_model, "stub-model");
    assert!(all.models.iter().all(|m| m.runnable_precision.is_none()));
    let fit = s.client.models(Some(24.0)).await.unwrap();
    assert!(!fit.models.is_empty() && fit.models.len() < 9);
    for m in &fit.models {
        match m.runnable_precision.as_deref() {
            Some("bf16") => assert!(m.bf16_vram_gb <= 24.0),
            Some("int4") => assert!(m.int4_vram_gb <= 24.0 && m.bf16_vram_gb > 24.0),
            other => panic!("{other:?}"),
        }
    }
}

#[tokio::test]
async fn health_reports_each_component() {
    let s = stub_server().await;
    let h = s.client.health().await.unwrap();
    assert_eq!(h.status, "ok");
    for c in ["embedding", "generation", "index", "sessions", "background_loops"] {
        assert!(h.components[c].ok, "{c}: {:?}", h.components[c]);
    }

    let dir = tempfile::tempdir().unwrap();
    let mut config = stub_config(&dir);
    config.embedding.backend = hpcrag_server::config::BackendKind::Http;
    config.embedding.endpoint_url = dead_url("/v1/embeddings");
    config.embedding.timeout_secs = 2.0;
    let s = server_from_config(dir, config, vec![]).await;
    let h = s.client.health().await.unwrap();
    assert_eq!(h.status, "degraded");
    assert!(!h.components["embedding"].ok);
    assert!(h.components["generation"].ok);
}

#[tokio::test]
async fn config_exposes_weights_and_loops() {
    let s = stub_server().await;
    let c = s.client.config().await.unwrap();
    assert_eq!(c["composite_weights"]["bert_score_f1"], 0.35);
    assert_eq!(c["composite_weights"]["latency_saturation_seconds"], 20.0);
    assert_eq!(c["session_ttl_minutes"], 60);
    assert_eq!(c["service"]["default_model"], "stub-model");
    let loops = c["loops"].as_array().unwrap();
    assert_eq!(loops.len(), 2);
    assert!(loops.iter().all(|l| l["enabled"] == false));
}

#[tokio::test]
async fn sources_endpoint_lists_configured_sources() {
    let site = fixture_site(0).await;
    let s = server_with_backend(StubChatBackend::echo(), sources_for(&page_urls(site))).await;
    let listed = s.client.kb_sources().await.unwrap();
    assert_eq!(listed.len(), 3);
    assert_eq!(listed[0].priority, "P1");
    let r = s.client.crawl(&CrawlRequest { urls: None, max_priority: Some("p2".into()), wait: true }).await.unwrap();
    assert_eq!(r.sources, 3);
    assert_eq!(r.report.unwrap().pages_fetched, 3);
}

#[tokio::test]
async fn static_dashboard_is_served_next_to_the_api() {
    let dir = tempfile::tempdir().unwrap();
    let web = dir.path().join("web");
    std::fs::create_dir_all(&web).unwrap();
    std::fs::write(web.join("index.html"), "<!doctype html><title>dash</title>").unwrap();
    let mut config = stub_config(&dir);
    config.static_dir = Some(web);
    let s = server_from_config(dir, config, vec![]).await;
    let http = reqwest::Client::new();
    let page = http.get(s.url("/")).send().await.unwrap();
    assert_eq!(page.status(), 200);
    assert!(page.text().await.unwrap().contains("dash"));
    let missing = http.get(s.url("/api/unknown")).send().await.unwrap();
    assert_eq!(missing.status(), 404);
    assert_eq!(missing.json::<ErrorBody>().await.unwrap().error.code, codes::NOT_FOUND);
    assert!(s.client.health().await.is_ok());
}
