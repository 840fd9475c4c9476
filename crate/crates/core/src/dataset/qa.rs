//! LLM-driven Q&A generation and the rule-based fallback.

use std::sync::LazyLock;

use regex::Regex;

use super::{SourceStage, TrainingPair};
use crate::corpus::DocumentChunk;
use crate::generation::{ChatMessage, GenerationClient, GenerationError, GenerationParams};

pub const PAIRS_PER_CHUNK: usize = 3;
pub const DEFAULT_QA_PROMPT: &str = include_str!("../../assets/qa_generation_prompt.txt");

static QUESTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(?:\d+\s*[.)]\s*)?(?:\*\*)?Q(?:uestion)?\s*\d*\s*(?:\*\*)?\s*[:.]\s*(?:\*\*)?\s*(.*)$").unwrap()
});
static ANSWER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:\*\*)?A(?:nswer)?\s*\d*\s*(?:\*\*)?\s*[:.]\s*(?:\*\*)?\s*(.*)$").unwrap());
static NUMBERED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*\d+\s*[.)]\s*$").unwrap());

/// Parses numbered `Q:` / `A:` blocks. Continuation lines join the current
/// field. Blocks missing either half are skipped; at most `max` pairs.
pub fn parse_qa_blocks(reply: &str, max: usize) -> Vec<(String, String)> {
    enum Field {
        None,
        Q,
        A,
    }
    let mut out = Vec::new();
    let (mut q, mut a) = (String::new(), String::new());
    let mut field = Field::None;
    let flush = |q: &mut String, a: &mut String, out: &mut Vec<(String, String)>| {
        let (qt, at) = (q.trim().to_owned(), a.trim().to_owned());
        if !qt.is_empty() && !at.is_empty() {
            out.push((qt, at));
        }
        q.clear();
        a.clear();
    };
    for line in reply.lines() {
        if let Some(c) = QUESTION.captures(line) {
            flush(&mut q, &mut a, &mut out);
            q.push_str(c[1].trim());
            field = Field::Q;
        } else if let Some(c) = ANSWER.captures(line) {
            if matches!(field, Field::A) {
                // A second answer without a question: drop the block.
                q.clear();
                a.clear();
                field = Field::None;
                continue;
            }
            a.push_str(c[1].trim());
            field = Field::A;
        } else if NUMBERED.is_match(line) || line.trim().is_empty() {
            continue;
        } else {
            let target = match field {
                Field::Q => &mut q,
                Field::A => &mut a,
                Field::None => continue,
            };
            if !target.is_empty() {
                target.push(' ');
            }
            target.push_str(line.trim());
        }
    }
    flush(&mut q, &mut a, &mut out);
    out.truncate(max);
    out
}

pub fn render_qa_prompt(template: &str, chunk: &DocumentChunk) -> String {
    template.replace("{source}", &chunk.source_url).replace("{text}", &chunk.text)
}

/// Asks the generator for up to three pairs about `chunk`. A reply that
/// does not parse yields an empty list; a generator error is returned so
/// the caller can fall back.
pub async fn generate_qa_pairs(
    chunk: &DocumentChunk,
    generator: &GenerationClient,
    model: &str,
    template: &str,
) -> Result<Vec<TrainingPair>, GenerationError> {
    let messages = [ChatMessage::user(render_qa_prompt(template, chunk))];
    let params = GenerationParams { temperature: 0.7, max_tokens: 1024 };
    let reply = generator.generate(&messages, model, params).await?;
    let pairs = parse_qa_blocks(&reply.text, PAIRS_PER_CHUNK);
    if pairs.is_empty() {
        tracing::warn!(chunk = %chunk.id, source = %chunk.source_url, "generator reply had no Q/A pairs");
    }
    Ok(pairs
        .into_iter()
        .map(|(question, answer)| TrainingPair {
            question,
            answer,
            source_stage: SourceStage::LlmGenerated,
            source_url: Some(chunk.source_url.clone()),
        })
        .collect())
}

const FALLBACK_TEMPLATES: [&str; 3] = [
    "What does the documentation say about {topic}?",
    "What should I know before working with {topic}?",
    "Can you summarize the guidance on {topic}?",
];
const FALLBACK_ANSWER_WORDS: usize = 80;

/// Topic for fallback questions: the first non-empty heading, else the last
/// URL path segment.
pub fn fallback_topic(headings: &[String], source_url: &str) -> String {
    if let Some(h) = headings.iter().map(|h| h.trim()).find(|h| !h.is_empty()) {
        return h.to_owned();
    }
    let seg = source_url.trim_end_matches('/').rsplit('/').next().unwrap_or(source_url);
    let seg = seg.split(['.', '?', '#']).next().unwrap_or(seg);
    seg.replace(['-', '_'], " ")
}

/// One rule-based pair for the `ordinal`-th chunk of a page: a templated
/// question over the page topic answered by the chunk's opening words.
pub fn template_pair(chunk: &DocumentChunk, topic: &str, ordinal: usize) -> TrainingPair {
    let template = FALLBACK_TEMPLATES[ordinal % FALLBACK_TEMPLATES.len()];
    let mut question = template.replace("{topic}", topic);
    if ordinal >= FALLBACK_TEMPLATES.len() {
        question =
            format!("{} (part {})", question.trim_end_matches('?'), ordinal / FALLBACK_TEMPLATES.len() + 1) + "?";
    }
    let answer: Vec<&str> = chunk.text.split_whitespace().take(FALLBACK_ANSWER_WORDS).collect();
    TrainingPair {
        question,
        answer: answer.join(" "),
        source_stage: SourceStage::TemplateFallback,
        source_url: Some(chunk.source_url.clone()),
    }
}
