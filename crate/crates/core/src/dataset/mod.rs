//! Instruction-tuning data from crawled documentation.
//!
//! Stages: crawl and chunk (training profile), LLM Q&A generation with a
//! rule-based fallback, merge of the curated and GPU-advisor anchor pairs,
//! MD5 dedup with length filters, and emission of the training JSONL plus
//! the fine-tune configuration.

mod finetune;
mod pairs;
mod qa;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use futures::StreamExt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{chunk_document, ChunkingProfile, CrawlFailure, Crawler, DocumentChunk, FetchedPage, SourceSpec};
use crate::generation::{GenerationClient, DEFAULT_SYSTEM_PROMPT};

pub use finetune::{emit_finetune_config, FinetuneConfig, DEFAULT_BASE_MODEL, LORA_TARGET_MODULES};
pub use pairs::{
    bundled_curated, bundled_gpu_advisor, dedup_and_filter, emit_training_file, load_curated, load_gpu_advisor,
    load_pairs, normalize_question, parse_pairs, question_key, read_training_file, FilterCounts, TrainingMessage,
    TrainingMeta, TrainingRecord, CURATED_PAIRS, GPU_ADVISOR_PAIRS, MIN_ANSWER_CHARS, MIN_QUESTION_CHARS,
};
pub use qa::{
    fallback_topic, generate_qa_pairs, parse_qa_blocks, render_qa_prompt, template_pair, DEFAULT_QA_PROMPT,
    PAIRS_PER_CHUNK,
};

pub const TRAINING_FILE: &str = "training.jsonl";
pub const FINETUNE_CONFIG_FILE: &str = "finetune_config.json";
pub const REPORT_FILE: &str = "dataset_report.json";
pub const DEFAULT_GENERATION_PARALLELISM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceStage {
    Curated,
    GpuAdvisor,
    LlmGenerated,
    TemplateFallback,
    PromptDataset,
}

impl SourceStage {
    pub const ALL: [SourceStage; 5] = [
        SourceStage::Curated,
        SourceStage::GpuAdvisor,
        SourceStage::LlmGenerated,
        SourceStage::TemplateFallback,
        SourceStage::PromptDataset,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub question: String,
    pub answer: String,
    pub source_stage: SourceStage,
    pub source_url: Option<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DatasetError {
    #[error("{origin} line {line}: {message}")]
    MalformedPair { origin: String, line: usize, message: String },
    #[error("invalid fine-tune configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone)]
pub struct DatasetBuildConfig {
    pub output_dir: PathBuf,
    pub curated_path: Option<PathBuf>,
    pub gpu_advisor_path: Option<PathBuf>,
    pub prompt_dataset_paths: Vec<PathBuf>,
    pub generator_model: String,
    pub qa_prompt_template: String,
    pub system_prompt: String,
    pub parallelism: usize,
    pub finetune_overrides: serde_json::Map<String, serde_json::Value>,
}

impl DatasetBuildConfig {
    /// Bundled anchor pairs, no prompt datasets, Table-default fine-tune config.
    pub fn new(output_dir: impl Into<PathBuf>, generator_model: impl Into<String>) -> Self {
        Self {
            output_dir: output_dir.into(),
            curated_path: None,
            gpu_advisor_path: None,
            prompt_dataset_paths: Vec::new(),
            generator_model: generator_model.into(),
            qa_prompt_template: DEFAULT_QA_PROMPT.to_owned(),
            system_prompt: DEFAULT_SYSTEM_PROMPT.trim().to_owned(),
            parallelism: DEFAULT_GENERATION_PARALLELISM,
            finetune_overrides: serde_json::Map::new(),
        }
    }
}

/// Per-stage accounting. `input_by_stage` minus the filter losses equals
/// `records_written`, which equals the sum of `final_by_stage`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub pages_fetched: usize,
    pub pages_failed: usize,
    pub crawl_errors: Vec<String>,
    pub chunks: usize,
    pub chunks_generator_failed: usize,
    pub chunks_without_pairs: usize,
    pub input_by_stage: BTreeMap<SourceStage, usize>,
    pub filter: FilterCounts,
    pub final_by_stage: BTreeMap<SourceStage, usize>,
    pub records_written: usize,
    pub training_file: PathBuf,
    pub finetune_config_file: PathBuf,
}

impl DatasetReport {
    /// Checks that every counter adds up.
    pub fn reconcile(&self) -> Result<(), String> {
        let input: usize = self.input_by_stage.values().sum();
        let kept: usize = self.final_by_stage.values().sum();
        let f = &self.filter;
        if input != f.input {
            return Err(format!("stage inputs {input} != filter input {}", f.input));
        }
        if f.input != f.removed_duplicate + f.removed_short_question + f.removed_short_answer + f.kept {
            return Err("filter counts do not add up".into());
        }
        if kept != f.kept || kept != self.records_written {
            return Err(format!("kept {kept}, filter kept {}, written {}", f.kept, self.records_written));
        }
        Ok(())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> DatasetError {
    DatasetError::Io(format!("{}: {e}", path.display()))
}

pub struct DatasetBuilder {
    config: DatasetBuildConfig,
    generator: GenerationClient,
}

impl DatasetBuilder {
    pub fn new(config: DatasetBuildConfig, generator: GenerationClient) -> Self {
        Self { config, generator }
    }

    /// Stage 1 with a live crawl, then everything else.
    pub async fn build(&self, crawler: &Crawler, sources: &[SourceSpec]) -> Result<DatasetReport, DatasetError> {
        let (pages, failures) = crawler.collect_pages(sources).await;
        self.build_from_pages(&pages, &failures).await
    }

    /// Stages 2–5 over already-fetched pages.
    pub async fn build_from_pages(
        &self,
        pages: &[FetchedPage],
        failures: &[CrawlFailure],
    ) -> Result<DatasetReport, DatasetError> {
        let cfg = &self.config;
        // Anchors first: a missing curated file is fatal before any generation.
        let curated = match &cfg.curated_path {
            Some(p) => load_curated(p)?,
            None => bundled_curated(),
        };
        let advisor = match &cfg.gpu_advisor_path {
            Some(p) => load_gpu_advisor(p)?,
            None => bundled_gpu_advisor(),
        };
        let mut prompt_pairs = Vec::new();
        for p in &cfg.prompt_dataset_paths {
            prompt_pairs.extend(load_pairs(p, SourceStage::PromptDataset)?);
        }

        let mut report = DatasetReport {
            pages_fetched: pages.len(),
            pages_failed: failures.len(),
            crawl_errors: failures.iter().map(|f| format!("{}: {}", f.url, f.reason)).collect(),
            ..DatasetReport::default()
        };

        // Stage 1: training-profile chunks, with the page topic for fallbacks.
        let mut chunks: Vec<(DocumentChunk, String, usize)> = Vec::new();
        for page in pages {
            let topic = fallback_topic(&page.headings, &page.url);
            for (ordinal, c) in chunk_document(&page.url, page.fetched_at, &page.text, &ChunkingProfile::TRAINING)
                .into_iter()
                .enumerate()
            {
                chunks.push((c, topic.clone(), ordinal));
            }
        }
        report.chunks = chunks.len();

        // Stage 2: bounded parallelism, results kept in chunk order.
        let template = cfg.qa_prompt_template.as_str();
        let model = cfg.generator_model.as_str();
        let generator = &self.generator;
        // Futures are built up front so the spawned build future stays `Send`.
        let jobs: Vec<_> = chunks.iter().map(|(c, _, _)| generate_qa_pairs(c, generator, model, template)).collect();
        let results: Vec<_> = futures::stream::iter(jobs).buffered(cfg.parallelism.max(1)).collect().await;
        let mut generated = Vec::new();
        let mut fallback = Vec::new();
        for ((chunk, topic, ordinal), result) in chunks.iter().zip(results) {
            match result {
                Ok(p) if p.is_empty() => report.chunks_without_pairs += 1,
                Ok(p) => generated.extend(p),
                Err(e) => {
                    tracing::warn!(chunk = %chunk.id, source = %chunk.source_url, error = %e, "generation failed, using template fallback");
                    report.chunks_generator_failed += 1;
                    fallback.push(template_pair(chunk, topic, *ordinal));
                }
            }
        }

        // Stages 3–5: anchors first so they win dedup.
        let all: Vec<TrainingPair> =
            curated.into_iter().chain(advisor).chain(generated).chain(fallback).chain(prompt_pairs).collect();
        for stage in SourceStage::ALL {
            report.input_by_stage.insert(stage, 0);
            report.final_by_stage.insert(stage, 0);
        }
        for p in &all {
            *report.input_by_stage.entry(p.source_stage).or_default() += 1;
        }
        let (kept, filter) = dedup_and_filter(all);
        for p in &kept {
            *report.final_by_stage.entry(p.source_stage).or_default() += 1;
        }
        report.filter = filter;

        std::fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;
        let training = cfg.output_dir.join(TRAINING_FILE);
        report.records_written =
            emit_training_file(&kept, &training, &cfg.system_prompt).map_err(|e| io_err(&training, e))?;
        report.training_file = training;
        let ft = cfg.output_dir.join(FINETUNE_CONFIG_FILE);
        emit_finetune_config(&cfg.finetune_overrides, &ft)?;
        report.finetune_config_file = ft;

        let report_path = cfg.output_dir.join(REPORT_FILE);
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(&report_path, text).map_err(|e| io_err(&report_path, e))?;
        Ok(report)
    }
}
