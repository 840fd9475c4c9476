use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use hpcrag_core::corpus::{up_to_priority, CrawlConfig, Crawler, Priority};
use hpcrag_core::dataset::{emit_finetune_config, DatasetBuildConfig, DatasetBuilder};
use hpcrag_server::state::{build_generator, load_configured_sources};
use hpcrag_server::{AppState, ServiceConfig};
use serde_json::{Map, Value};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "hpcrag-server", version, about = "HPC documentation assistant and model benchmarking service")]
struct Cli {
    /// TOML configuration file; `HPCRAG_*` variables override it.
    #[arg(long, global = true, env = "HPCRAG_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP service (the default).
    Serve {
        /// Overrides `listen`.
        #[arg(long)]
        listen: Option<std::net::SocketAddr>,
    },
    /// Print the effective configuration as TOML.
    PrintConfig,
    /// Crawl the sources and write a chat-format training set.
    BuildDataset {
        #[arg(long)]
        out: PathBuf,
        /// Model that writes question/answer pairs; the configured default when absent.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        curated: Option<PathBuf>,
        #[arg(long)]
        gpu_advisor: Option<PathBuf>,
        /// Extra `Q:`/`A:` prompt files.
        #[arg(long = "prompts")]
        prompt_files: Vec<PathBuf>,
        /// Only sources at or above this priority.
        #[arg(long, value_parser = parse_priority)]
        max_priority: Option<Priority>,
        /// Fine-tune config override, `key=value` (value parsed as JSON when possible).
        #[arg(long = "set", value_parser = parse_override)]
        overrides: Vec<(String, Value)>,
    },
    /// Write the fine-tune configuration alone.
    FinetuneConfig {
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_parser = parse_override)]
        overrides: Vec<(String, Value)>,
    },
}

fn parse_priority(s: &str) -> Result<Priority, String> {
    serde_json::from_value(Value::String(s.to_uppercase())).map_err(|_| format!("expected P1, P2 or P3, got {s:?}"))
}

fn parse_override(s: &str) -> Result<(String, Value), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_owned()));
    Ok((k.trim().to_owned(), value))
}

fn overrides_map(pairs: Vec<(String, Value)>) -> Map<String, Value> {
    pairs.into_iter().collect()
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let cli = Cli::parse();
    let mut config = ServiceConfig::load(cli.config.as_deref())?;
    match cli.command.unwrap_or(Command::Serve { listen: None }) {
        Command::Serve { listen } => {
            if let Some(l) = listen {
                config.listen = l;
            }
            let state = AppState::build(config)?;
            hpcrag_server::serve(state, shutdown_signal()).await
        }
        Command::PrintConfig => {
            print!("{}", config.to_toml());
            Ok(())
        }
        Command::BuildDataset { out, model, curated, gpu_advisor, prompt_files, max_priority, overrides } => {
            let generator = build_generator(&config)?;
            let mut sources = load_configured_sources(&config)?;
            if let Some(p) = max_priority {
                sources = up_to_priority(&sources, p);
            }
            let mut dc = DatasetBuildConfig::new(&out, model.unwrap_or_else(|| config.default_model.clone()));
            dc.curated_path = curated;
            dc.gpu_advisor_path = gpu_advisor;
            dc.prompt_dataset_paths = prompt_files;
            dc.finetune_overrides = overrides_map(overrides);
            let crawler = Crawler::new(CrawlConfig {
                timeout: std::time::Duration::from_secs(config.crawl_timeout_secs),
                ..CrawlConfig::default()
            })?;
            let report = DatasetBuilder::new(dc, generator).build(&crawler, &sources).await?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            report.reconcile().map_err(anyhow::Error::msg).context("dataset counts do not reconcile")
        }
        Command::FinetuneConfig { out, overrides } => {
            let fc = emit_finetune_config(&overrides_map(overrides), &out)?;
            println!("{}", serde_json::to_string_pretty(&fc)?);
            Ok(())
        }
    }
}
