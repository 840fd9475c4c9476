//! The `hpcrag` command line. Every command is one or more calls to the
//! service; output is human-readable text, or JSON with `--json`.

use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use uuid::Uuid;

use crate::types::*;
use crate::{HpcragClient, DEFAULT_BASE_URL};

#[derive(Debug, Parser)]
#[command(name = "hpcrag", version, about = "Command-line client for the hpcrag service")]
pub struct Cli {
    /// Base URL of the service.
    #[arg(long, global = true, env = "HPCRAG_URL", default_value = DEFAULT_BASE_URL)]
    pub url: String,
    /// Print raw JSON responses.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ask one question.
    Query(QueryArgs),
    /// Interactive session; one question per input line, answers streamed.
    Chat(ChatArgs),
    /// Start and inspect benchmark runs.
    #[command(subcommand)]
    Benchmark(BenchmarkCommand),
    /// Rate an answer (+1 indexes the pair into the knowledge base).
    Feedback(FeedbackArgs),
    /// Crawl documentation into the knowledge base.
    Crawl(CrawlArgs),
    /// Knowledge base statistics.
    Stats,
    /// Configured documentation sources.
    Sources,
    /// Registered models, optionally filtered by a VRAM budget.
    Models {
        #[arg(long)]
        vram_gb: Option<f64>,
    },
    /// Show a session's turns.
    Session { id: Uuid },
    /// Component health.
    Health,
    /// Effective service configuration.
    Config,
    /// The service's OpenAPI document.
    Docs,
}

#[derive(Debug, Args)]
pub struct GenerationArgs {
    #[arg(long)]
    pub model: Option<String>,
    #[command(flatten)]
    pub options: RunArgs,
}

/// Settings shared by queries and benchmark runs.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// Passages to retrieve.
    #[arg(short, long)]
    pub k: Option<usize>,
    /// Answer without retrieval.
    #[arg(long)]
    pub no_rag: bool,
    #[arg(long)]
    pub temperature: Option<f32>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    pub prompt: String,
    #[arg(long)]
    pub session: Option<Uuid>,
    /// Score the answer.
    #[arg(long)]
    pub evaluate: bool,
    /// Print the answer as it is generated.
    #[arg(long)]
    pub stream: bool,
    #[command(flatten)]
    pub generation: GenerationArgs,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    /// Continue an existing session.
    #[arg(long)]
    pub session: Option<Uuid>,
    #[command(flatten)]
    pub generation: GenerationArgs,
}

#[derive(Debug, Subcommand)]
pub enum BenchmarkCommand {
    /// Start a run over every prompt and model.
    Start {
        /// Model to benchmark; repeat for several.
        #[arg(long = "model", required = true)]
        models: Vec<String>,
        /// One prompt per line, or JSON lines with `id`, `text`, `gold_answer`.
        #[arg(long)]
        prompts: Option<PathBuf>,
        #[command(flatten)]
        options: RunArgs,
        /// Block until the run finishes and print the leaderboard.
        #[arg(long)]
        wait: bool,
    },
    Status {
        run_id: Uuid,
    },
    Leaderboard {
        run_id: Uuid,
    },
    /// Download the results CSV.
    Csv {
        run_id: Uuid,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Poll until the run finishes.
    Wait {
        run_id: Uuid,
        /// Poll interval in seconds.
        #[arg(long, default_value_t = 2.0)]
        every: f64,
    },
    List,
    Cancel {
        run_id: Uuid,
    },
}

#[derive(Debug, Args)]
pub struct FeedbackArgs {
    #[arg(long)]
    pub prompt: String,
    #[arg(long)]
    pub response: String,
    #[arg(long, conflicts_with = "down", required_unless_present = "down")]
    pub up: bool,
    #[arg(long)]
    pub down: bool,
    #[arg(long)]
    pub session: Option<Uuid>,
}

#[derive(Debug, Args)]
pub struct CrawlArgs {
    /// Crawl these URLs instead of the configured sources.
    #[arg(long = "page", value_name = "URL")]
    pub urls: Vec<String>,
    /// Only configured sources at or above this priority (P1..P3).
    #[arg(long, conflicts_with = "urls")]
    pub max_priority: Option<String>,
    /// Wait for the crawl to finish and print its report.
    #[arg(long)]
    pub wait: bool,
}

impl GenerationArgs {
    fn apply(&self, r: &mut QueryRequest) {
        let o = &self.options;
        r.model = self.model.clone();
        r.k = o.k;
        r.use_rag = o.no_rag.then_some(false);
        r.temperature = o.temperature;
        r.max_tokens = o.max_tokens;
    }
}

/// Parses a prompts file: JSON objects per line, or plain text lines.
pub fn read_prompts(text: &str) -> anyhow::Result<Vec<PromptInput>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('{') {
            let p = serde_json::from_str(line).with_context(|| format!("prompts line {}", i + 1))?;
            out.push(p);
        } else {
            out.push(PromptInput::Text(line.to_owned()));
        }
    }
    if out.is_empty() {
        bail!("the prompts file has no prompts");
    }
    Ok(out)
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> anyhow::Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn print_answer(out: &mut dyn Write, r: &QueryResponse, with_answer: bool) -> anyhow::Result<()> {
    if with_answer {
        writeln!(out, "{}", r.answer)?;
    }
    if !r.sources.is_empty() {
        writeln!(out)?;
        for s in &r.sources {
            writeln!(out, "{}", s.citation())?;
        }
    }
    for w in &r.warnings {
        writeln!(out, "warning ({}): {}", w.stage, w.message)?;
    }
    if let Some(m) = &r.metrics {
        writeln!(
            out,
            "composite {:.3}  bert {:.3}  cosine {:.3}  hpc {:.3}  rouge-l {:.3}  rag {:.3}",
            m.composite, m.bert_score_f1, m.cosine_similarity, m.hpc_domain_score, m.rouge_l_f1, m.rag_relevance
        )?;
        if !m.degraded.is_empty() {
            writeln!(out, "degraded: {}", m.degraded.join(", "))?;
        }
    }
    writeln!(out, "model {}  {:.2}s  session {}", r.model, r.latency_s, r.session_id)?;
    Ok(())
}

/// Streams one answer, writing deltas as they arrive.
async fn stream_answer(
    client: &HpcragClient,
    req: &QueryRequest,
    out: &mut dyn Write,
) -> anyhow::Result<QueryResponse> {
    let mut stream = client.query_stream(req).await?;
    while let Some(ev) = stream.next().await {
        match ev? {
            StreamEvent::Delta(d) => {
                write!(out, "{d}")?;
                out.flush()?;
            }
            StreamEvent::Done(r) => {
                writeln!(out)?;
                return Ok(*r);
            }
            StreamEvent::Error(e) => bail!("{} at {}: {}", e.code, e.stage, e.message),
        }
    }
    bail!("the stream ended without a result")
}

fn print_status(out: &mut dyn Write, s: &BenchmarkStatus) -> anyhow::Result<()> {
    writeln!(
        out,
        "{}  {:?}  {}/{} pairs  models: {}",
        s.run_id,
        s.status,
        s.completed_pairs,
        s.total_pairs,
        s.models.join(", ")
    )?;
    if let Some(e) = &s.error {
        writeln!(out, "error: {e}")?;
    }
    Ok(())
}

fn print_board(out: &mut dyn Write, rows: &[LeaderboardRow]) -> anyhow::Result<()> {
    writeln!(
        out,
        "{:>4}  {:<40} {:>9} {:>6} {:>6} {:>6} {:>7} {:>8} {:>6}",
        "rank", "model", "composite", "bert", "cosine", "hpc", "rouge-l", "latency", "pairs"
    )?;
    for r in rows {
        writeln!(
            out,
            "{:>4}  {:<40} {:>9.3} {:>6.3} {:>6.3} {:>6.3} {:>7.3} {:>7.2}s {:>6}",
            r.rank,
            r.model,
            r.mean_composite,
            r.mean_bert_score_f1,
            r.mean_cosine,
            r.mean_hpc_score,
            r.mean_rouge_l,
            r.mean_latency_s,
            r.pairs
        )?;
    }
    Ok(())
}

fn print_report(out: &mut dyn Write, r: &CrawlReport) -> anyhow::Result<()> {
    writeln!(
        out,
        "fetched {}  failed {}  new chunks {}  duplicates {}",
        r.pages_fetched, r.pages_failed, r.chunks_new, r.chunks_skipped_duplicate
    )?;
    for e in &r.errors {
        writeln!(out, "  {}: {}", e.url, e.reason)?;
    }
    if let Some(a) = &r.aborted {
        writeln!(out, "aborted: {a}")?;
    }
    Ok(())
}

/// Runs one command. `input` feeds `chat`; everything is written to `out`.
pub async fn run(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> anyhow::Result<()> {
    let client = HpcragClient::new(&cli.url)?;
    let json = cli.json;
    match cli.command {
        Command::Query(a) => {
            let mut req = QueryRequest::new(a.prompt);
            req.session_id = a.session;
            req.evaluate = a.evaluate.then_some(true);
            a.generation.apply(&mut req);
            if a.stream && !json {
                let r = stream_answer(&client, &req, out).await?;
                print_answer(out, &r, false)?;
            } else {
                let r = client.query(&req).await?;
                if json {
                    print_json(out, &r)?;
                } else {
                    print_answer(out, &r, true)?;
                }
            }
        }
        Command::Chat(a) => {
            let mut session = a.session;
            let mut line = String::new();
            loop {
                line.clear();
                if input.read_line(&mut line)? == 0 {
                    break;
                }
                let prompt = line.trim();
                if prompt.is_empty() {
                    continue;
                }
                if matches!(prompt, "/quit" | "/exit") {
                    break;
                }
                let mut req = QueryRequest::new(prompt);
                req.session_id = session;
                a.generation.apply(&mut req);
                match stream_answer(&client, &req, out).await {
                    Ok(r) => {
                        session = Some(r.session_id);
                        if json {
                            print_json(out, &r)?;
                        }
                    }
                    Err(e) => writeln!(out, "error: {e:#}")?,
                }
            }
            if let Some(s) = session {
                writeln!(out, "session {s}")?;
            }
        }
        Command::Benchmark(b) => benchmark(&client, b, json, out).await?,
        Command::Feedback(a) => {
            let req = FeedbackRequest {
                session_id: a.session,
                prompt: a.prompt,
                response: a.response,
                rating: if a.up { 1 } else { -1 },
            };
            let r = client.feedback(&req).await?;
            if json {
                print_json(out, &r)?;
            } else {
                let what = match (r.indexed, r.queued, r.logged) {
                    (true, _, _) => "logged and indexed",
                    (_, true, _) => "logged, indexing queued",
                    (_, _, true) => "logged",
                    _ => "recorded",
                };
                writeln!(out, "{what}")?;
                if let Some(id) = r.index_entry_id {
                    writeln!(out, "index entry {id}")?;
                }
            }
        }
        Command::Crawl(a) => {
            let req = CrawlRequest {
                urls: (!a.urls.is_empty()).then_some(a.urls),
                max_priority: a.max_priority,
                wait: a.wait,
            };
            let r = client.crawl(&req).await?;
            if json {
                print_json(out, &r)?;
            } else {
                match &r.report {
                    Some(report) => print_report(out, report)?,
                    None => writeln!(out, "crawl of {} sources started", r.sources)?,
                }
            }
        }
        Command::Stats => {
            let s = client.kb_stats().await?;
            if json {
                print_json(out, &s)?;
            } else {
                writeln!(out, "records {}  dimension {}  sources {}", s.records, s.dimension, s.sources)?;
                writeln!(out, "crawl in progress: {}", s.crawl_in_progress)?;
                writeln!(out, "feedback pending: {}", s.feedback_pending)?;
                if let Some(c) = &s.last_crawl {
                    write!(out, "last crawl ({}, {}): ", c.trigger, c.finished_at.format("%Y-%m-%d %H:%M:%S"))?;
                    print_report(out, c)?;
                }
            }
        }
        Command::Sources => {
            let s = client.kb_sources().await?;
            if json {
                print_json(out, &s)?;
            } else {
                for e in &s {
                    writeln!(out, "{}  {}", e.priority, e.url)?;
                }
            }
        }
        Command::Models { vram_gb } => {
            let m = client.models(vram_gb).await?;
            if json {
                print_json(out, &m)?;
            } else {
                for i in &m.models {
                    let mark = if i.name == m.default_model { "*" } else { " " };
                    let run = i.runnable_precision.as_deref().map(|p| format!("  runs at {p}")).unwrap_or_default();
                    writeln!(
                        out,
                        "{mark} {:<45} {:>5}  bf16 {:>5.1} GB  int4 {:>5.1} GB  tier {}{run}",
                        i.name, i.parameter_count_label, i.bf16_vram_gb, i.int4_vram_gb, i.tier
                    )?;
                }
            }
        }
        Command::Session { id } => {
            let s = client.session(id).await?;
            if json {
                print_json(out, &s)?;
            } else {
                for t in &s.turns {
                    writeln!(out, "[{}]", t.timestamp.format("%H:%M:%S"))?;
                    writeln!(out, "> {}", t.user)?;
                    writeln!(out, "{}", t.assistant)?;
                }
            }
        }
        Command::Health => {
            let h = client.health().await?;
            if json {
                print_json(out, &h)?;
            } else {
                writeln!(out, "{}  version {}  up {:.0}s", h.status, h.version, h.uptime_s)?;
                for (name, c) in &h.components {
                    writeln!(out, "  {:<16} {:<4} {}", name, if c.ok { "ok" } else { "FAIL" }, c.detail)?;
                }
            }
        }
        Command::Config => print_json(out, &client.config().await?)?,
        Command::Docs => print_json(out, &client.api_docs().await?)?,
    }
    Ok(())
}

async fn benchmark(
    client: &HpcragClient,
    cmd: BenchmarkCommand,
    json: bool,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    match cmd {
        BenchmarkCommand::Start { models, prompts, options, wait } => {
            let prompts = match prompts {
                Some(p) => Some(read_prompts(
                    &std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
                )?),
                None => None,
            };
            let req = BenchmarkStartRequest {
                prompts,
                models,
                k: options.k,
                use_rag: options.no_rag.then_some(false),
                temperature: options.temperature,
                max_tokens: options.max_tokens,
            };
            let mut s = client.start_benchmark(&req).await?;
            if wait {
                s = client.wait_benchmark(s.run_id, Duration::from_secs(1)).await?;
            }
            if json {
                print_json(out, &s)?;
            } else {
                print_status(out, &s)?;
                if wait {
                    print_board(out, &s.leaderboard)?;
                }
            }
        }
        BenchmarkCommand::Status { run_id } => {
            let s = client.benchmark_status(run_id).await?;
            if json {
                print_json(out, &s)?;
            } else {
                print_status(out, &s)?;
            }
        }
        BenchmarkCommand::Leaderboard { run_id } => {
            let b = client.leaderboard(run_id).await?;
            if json {
                print_json(out, &b)?;
            } else {
                writeln!(out, "{:?}  {}/{} pairs", b.status, b.completed_pairs, b.total_pairs)?;
                print_board(out, &b.rows)?;
            }
        }
        BenchmarkCommand::Csv { run_id, out: path } => {
            let csv = client.benchmark_csv(run_id).await?;
            match path {
                Some(p) => {
                    std::fs::write(&p, &csv.text).with_context(|| format!("writing {}", p.display()))?;
                    writeln!(out, "{} rows written to {}", csv.completed_pairs, p.display())?;
                }
                None => write!(out, "{}", csv.text)?,
            }
        }
        BenchmarkCommand::Wait { run_id, every } => {
            if !(every.is_finite() && every > 0.0) {
                bail!("--every must be positive");
            }
            let s = client.wait_benchmark(run_id, Duration::from_secs_f64(every)).await?;
            if json {
                print_json(out, &s)?;
            } else {
                print_status(out, &s)?;
                print_board(out, &s.leaderboard)?;
            }
        }
        BenchmarkCommand::List => {
            let runs = client.list_benchmarks().await?;
            if json {
                print_json(out, &runs)?;
            } else {
                for s in &runs {
                    print_status(out, s)?;
                }
            }
        }
        BenchmarkCommand::Cancel { run_id } => {
            let s = client.cancel_benchmark(run_id).await?;
            if json {
                print_json(out, &s)?;
            } else {
                print_status(out, &s)?;
            }
        }
    }
    Ok(())
}
