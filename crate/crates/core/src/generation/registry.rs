//! Supported models with VRAM requirements and hardware tiers.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Bf16,
    Int4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Identifier sent to the inference backend.
    pub name: String,
    pub display_name: String,
    pub parameter_count_label: String,
    pub bf16_vram_gb: f64,
    pub int4_vram_gb: f64,
    pub recommended_quant: Precision,
    pub tier: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunnableModel {
    pub model: ModelSpec,
    /// BF16 when it fits, otherwise 4-bit.
    pub precision: Precision,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("failed to read model registry: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid model registry: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("model {name}: {reason}")]
    Invalid { name: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRegistry {
    #[serde(rename = "model")]
    models: Vec<ModelSpec>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::parse(include_str!("../../assets/models.toml")).expect("shipped registry is valid")
    }
}

impl ModelRegistry {
    pub fn new(models: Vec<ModelSpec>) -> Result<Self, RegistryError> {
        let r = Self { models };
        r.validate()?;
        Ok(r)
    }

    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        let r: Self = toml::from_str(text)?;
        r.validate()?;
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("registry serialises")
    }

    fn validate(&self) -> Result<(), RegistryError> {
        for m in &self.models {
            let invalid = |reason: &str| RegistryError::Invalid { name: m.name.clone(), reason: reason.into() };
            if !(1..=4).contains(&m.tier) {
                return Err(invalid("tier must be 1..=4"));
            }
            if !(m.bf16_vram_gb > 0.0 && m.int4_vram_gb > 0.0) {
                return Err(invalid("VRAM requirements must be positive"));
            }
        }
        Ok(())
    }

    pub fn models(&self) -> &[ModelSpec] {
        &self.models
    }

    pub fn get(&self, name: &str) -> Option<&ModelSpec> {
        self.models.iter().find(|m| m.name == name || m.display_name == name)
    }

    /// Models that fit in `available_vram_gb`, with the precision that fits.
    pub fn select_tier(&self, available_vram_gb: f64) -> Vec<RunnableModel> {
        self.models
            .iter()
            .filter_map(|m| {
                let precision = if m.bf16_vram_gb <= available_vram_gb {
                    Precision::Bf16
                } else if m.int4_vram_gb <= available_vram_gb {
                    Precision::Int4
                } else {
                    return None;
                };
                Some(RunnableModel { model: m.clone(), precision })
            })
            .collect()
    }
}
