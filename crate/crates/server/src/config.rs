//! Service configuration: defaults, then an optional TOML file, then
//! `HPCRAG_*` environment variables.
//!
//! Top-level keys map to `HPCRAG_<KEY>`; keys inside a table use a double
//! underscore, e.g. `HPCRAG_EMBEDDING__ENDPOINT_URL` or
//! `HPCRAG_GENERATION__BACKEND=stub`.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use figment::providers::{Env, Format, Serialized, Toml};
use figment::Figment;
use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "HPCRAG_";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8000";
pub const DEFAULT_MODEL: &str = "Qwen/Qwen2.5-14B-Instruct";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// OpenAI-compatible HTTP server.
    Http,
    /// Deterministic in-process stand-in.
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSettings {
    pub backend: BackendKind,
    pub endpoint_url: String,
    pub model: String,
    pub batch_size: usize,
    pub dimension: usize,
    pub timeout_secs: f64,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        let d = hpcrag_core::embedding::EmbeddingBackendConfig::default();
        Self {
            backend: BackendKind::Http,
            endpoint_url: d.endpoint_url,
            model: d.model,
            batch_size: d.batch_size,
            dimension: d.dimension,
            timeout_secs: d.timeout_secs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StubMode {
    /// Replies "You asked: <last user message>".
    Echo,
    /// Replies with `stub_text`.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSettings {
    pub backend: BackendKind,
    pub endpoint_url: String,
    pub timeout_secs: f64,
    /// Model registry file; the bundled registry when absent.
    pub models_path: Option<PathBuf>,
    pub stub_mode: StubMode,
    pub stub_text: String,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        let d = hpcrag_core::generation::HttpChatConfig::default();
        Self {
            backend: BackendKind::Http,
            endpoint_url: d.endpoint_url,
            timeout_secs: d.timeout_secs,
            models_path: None,
            stub_mode: StubMode::Echo,
            stub_text: "This is a stub answer.".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexSettings {
    /// Defaults to `<data_dir>/index`.
    pub path: Option<PathBuf>,
    pub hnsw_m: usize,
    pub hnsw_ef_construction: usize,
    pub hnsw_ef_search: usize,
    pub seed: u64,
}

impl Default for IndexSettings {
    fn default() -> Self {
        let d = hpcrag_core::IndexConfig::default();
        Self {
            path: None,
            hnsw_m: d.hnsw_m,
            hnsw_ef_construction: d.hnsw_ef_construction,
            hnsw_ef_search: d.hnsw_ef_search,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Sessions, benchmark CSVs, feedback log and (by default) the index.
    pub data_dir: PathBuf,
    /// Seed-source list; the bundled list when absent.
    pub sources_path: Option<PathBuf>,
    /// Dashboard build served at `/`.
    pub static_dir: Option<PathBuf>,
    pub default_model: String,
    pub vocabulary_path: Option<PathBuf>,
    pub system_prompt_path: Option<PathBuf>,
    pub grounding_template_path: Option<PathBuf>,
    pub bert_baseline: f64,
    pub session_ttl_minutes: u64,
    pub history_turns: usize,
    pub history_chars: usize,
    pub ephemeral_sessions: bool,
    pub auto_crawl_enabled: bool,
    pub auto_crawl_interval_secs: f64,
    pub cleanup_enabled: bool,
    pub cleanup_interval_secs: f64,
    pub crawl_timeout_secs: u64,
    pub embedding: EmbeddingSettings,
    pub generation: GenerationSettings,
    pub index: IndexSettings,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: DEFAULT_LISTEN.parse().expect("valid default address"),
            data_dir: PathBuf::from("data"),
            sources_path: None,
            static_dir: None,
            default_model: DEFAULT_MODEL.into(),
            vocabulary_path: None,
            system_prompt_path: None,
            grounding_template_path: None,
            bert_baseline: 0.0,
            session_ttl_minutes: 60,
            history_turns: 5,
            history_chars: 2000,
            ephemeral_sessions: false,
            auto_crawl_enabled: true,
            auto_crawl_interval_secs: 24.0 * 3600.0,
            cleanup_enabled: true,
            cleanup_interval_secs: 15.0 * 60.0,
            crawl_timeout_secs: 15,
            embedding: EmbeddingSettings::default(),
            generation: GenerationSettings::default(),
            index: IndexSettings::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("configuration: {0}")]
    Load(#[from] Box<figment::Error>),
    #[error("configuration: {0}")]
    Invalid(String),
}

fn top_level_keys() -> Vec<String> {
    match serde_json::to_value(ServiceConfig::default()) {
        Ok(serde_json::Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

impl ServiceConfig {
    /// Defaults < `file` < environment.
    pub fn load(file: Option<&Path>) -> Result<Self, ConfigError> {
        Self::figment(file).extract::<Self>().map_err(|e| ConfigError::Load(Box::new(e)))?.validated()
    }

    fn figment(file: Option<&Path>) -> Figment {
        let mut f = Figment::from(Serialized::defaults(ServiceConfig::default()));
        if let Some(path) = file {
            f = f.merge(Toml::file_exact(path));
        }
        // Other HPCRAG_* variables (e.g. the CLI's HPCRAG_URL) are not ours.
        let known = top_level_keys();
        f.merge(Env::prefixed(ENV_PREFIX).split("__").filter(move |k| {
            let head = k.as_str().split('.').next().unwrap_or_default();
            known.iter().any(|t| t.eq_ignore_ascii_case(head))
        }))
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Figment::from(Serialized::defaults(ServiceConfig::default()))
            .merge(Toml::string(text))
            .extract::<Self>()
            .map_err(|e| ConfigError::Load(Box::new(e)))?
            .validated()
    }

    pub fn validated(self) -> Result<Self, ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        for (name, v, enabled) in [
            ("auto_crawl_interval_secs", self.auto_crawl_interval_secs, self.auto_crawl_enabled),
            ("cleanup_interval_secs", self.cleanup_interval_secs, self.cleanup_enabled),
        ] {
            if enabled && !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.session_ttl_minutes == 0 {
            return bad("session_ttl_minutes must be positive".into());
        }
        if self.embedding.dimension == 0 || self.embedding.batch_size == 0 {
            return bad("embedding.dimension and embedding.batch_size must be positive".into());
        }
        if !(self.bert_baseline < 1.0) {
            return bad(format!("bert_baseline must be below 1, got {}", self.bert_baseline));
        }
        if self.default_model.trim().is_empty() {
            return bad("default_model must not be empty".into());
        }
        for (name, path) in [
            ("sources_path", &self.sources_path),
            ("static_dir", &self.static_dir),
            ("vocabulary_path", &self.vocabulary_path),
            ("system_prompt_path", &self.system_prompt_path),
            ("grounding_template_path", &self.grounding_template_path),
            ("generation.models_path", &self.generation.models_path),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return bad(format!("{name} {} does not exist", p.display()));
                }
            }
        }
        Ok(self)
    }

    pub fn index_dir(&self) -> PathBuf {
        self.index.path.clone().unwrap_or_else(|| self.data_dir.join("index"))
    }

    pub fn auto_crawl_interval(&self) -> Duration {
        Duration::from_secs_f64(self.auto_crawl_interval_secs)
    }

    pub fn cleanup_interval(&self) -> Duration {
        Duration::from_secs_f64(self.cleanup_interval_secs)
    }

    /// A self-contained configuration for tests and demos: stub backends,
    /// data under `data_dir`, ephemeral port, loops off.
    pub fn stub(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            listen: "127.0.0.1:0".parse().expect("valid address"),
            data_dir: data_dir.into(),
            auto_crawl_enabled: false,
            cleanup_enabled: false,
            embedding: EmbeddingSettings { backend: BackendKind::Stub, dimension: 256, ..EmbeddingSettings::default() },
            generation: GenerationSettings { backend: BackendKind::Stub, ..GenerationSettings::default() },
            ..Self::default()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}
