//! QLoRA hyperparameters serialized for the external training stack.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::DatasetError;

pub const DEFAULT_BASE_MODEL: &str = "meta-llama/Meta-Llama-3.1-8B-Instruct";
pub const LORA_TARGET_MODULES: [&str; 7] =
    ["q_proj", "k_proj", "v_proj", "o_proj", "gate_proj", "up_proj", "down_proj"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneConfig {
    pub base_model: String,
    pub lora_r: u32,
    pub lora_alpha: u32,
    pub lora_dropout: f64,
    pub lora_target_modules: Vec<String>,
    #[serde(alias = "lr")]
    pub learning_rate: f64,
    pub per_device_train_batch_size: u32,
    pub gradient_accumulation_steps: u32,
    pub effective_batch_size: u32,
    #[serde(alias = "epochs")]
    pub num_train_epochs: u32,
    pub lr_scheduler_type: String,
    pub warmup_ratio: f64,
    pub max_length: u32,
    pub weight_decay: f64,
    pub max_grad_norm: f64,
    pub bf16: bool,
    pub gradient_checkpointing: bool,
    pub group_by_length: bool,
    pub load_in_4bit: bool,
    pub bnb_4bit_quant_type: String,
    pub bnb_4bit_use_double_quant: bool,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            base_model: DEFAULT_BASE_MODEL.to_owned(),
            lora_r: 64,
            lora_alpha: 128,
            lora_dropout: 0.05,
            lora_target_modules: LORA_TARGET_MODULES.iter().map(|s| s.to_string()).collect(),
            learning_rate: 2e-4,
            per_device_train_batch_size: 2,
            gradient_accumulation_steps: 8,
            effective_batch_size: 16,
            num_train_epochs: 3,
            lr_scheduler_type: "cosine".to_owned(),
            warmup_ratio: 0.05,
            max_length: 2048,
            weight_decay: 0.01,
            max_grad_norm: 1.0,
            bf16: true,
            gradient_checkpointing: true,
            group_by_length: true,
            load_in_4bit: true,
            bnb_4bit_quant_type: "nf4".to_owned(),
            bnb_4bit_use_double_quant: true,
            seed: 42,
        }
    }
}

impl FinetuneConfig {
    /// Defaults with the given JSON fields replaced. Changing the per-device
    /// batch or accumulation steps recomputes the effective batch unless it
    /// is overridden too.
    pub fn with_overrides(overrides: &Map<String, Value>) -> Result<Self, DatasetError> {
        let mut merged = match serde_json::to_value(Self::default()).expect("config serializes") {
            Value::Object(m) => m,
            _ => unreachable!("struct serializes to an object"),
        };
        let mut touched_batch = false;
        for (k, v) in overrides {
            let key = match k.as_str() {
                "lr" => "learning_rate",
                "epochs" => "num_train_epochs",
                other => other,
            };
            if !merged.contains_key(key) {
                return Err(DatasetError::InvalidConfig(format!("unknown field {k:?}")));
            }
            if key == "per_device_train_batch_size" || key == "gradient_accumulation_steps" {
                touched_batch = true;
            }
            merged.insert(key.to_owned(), v.clone());
        }
        if touched_batch && !overrides.contains_key("effective_batch_size") {
            let get = |k: &str| merged.get(k).and_then(Value::as_u64).unwrap_or(0);
            let eff = get("per_device_train_batch_size") * get("gradient_accumulation_steps");
            merged.insert("effective_batch_size".into(), Value::from(eff));
        }
        let cfg: Self =
            serde_json::from_value(Value::Object(merged)).map_err(|e| DatasetError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let fail = |m: &str| Err(DatasetError::InvalidConfig(m.to_owned()));
        if self.base_model.trim().is_empty() {
            return fail("base_model must not be empty");
        }
        if self.lora_r == 0 || self.lora_alpha == 0 {
            return fail("lora_r and lora_alpha must be positive");
        }
        if !(0.0..1.0).contains(&self.lora_dropout) {
            return fail("lora_dropout must be in [0, 1)");
        }
        if self.lora_target_modules.is_empty() {
            return fail("lora_target_modules must not be empty");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        if self.per_device_train_batch_size == 0 || self.gradient_accumulation_steps == 0 {
            return fail("batch size and accumulation steps must be positive");
        }
        if self.effective_batch_size != self.per_device_train_batch_size * self.gradient_accumulation_steps {
            return fail("effective_batch_size must equal per_device_train_batch_size * gradient_accumulation_steps");
        }
        if self.num_train_epochs == 0 {
            return fail("num_train_epochs must be at least 1");
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return fail("warmup_ratio must be in [0, 1)");
        }
        if self.max_length == 0 {
            return fail("max_length must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.max_grad_norm > 0.0) {
            return fail("weight_decay must be >= 0 and max_grad_norm > 0");
        }
        Ok(())
    }
}

/// Writes `finetune_config.json` content to `path`.
pub fn emit_finetune_config(overrides: &Map<String, Value>, path: &Path) -> Result<FinetuneConfig, DatasetError> {
    let cfg = FinetuneConfig::with_overrides(overrides)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| DatasetError::Io(e.to_string()))?;
    }
    let mut text = serde_json::to_string_pretty(&cfg).expect("config serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}
