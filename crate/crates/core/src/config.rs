//! Run configuration covering every stage, read from JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterConfig;
use crate::dataset::SCHEMA_VERSION;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::features::{LayoutConfig, VocabConfig};
use crate::finetune::FinetuneConfig;
use crate::pretrain::PretrainConfig;
use crate::synth::SyntheticSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub schema_version: u32,
    pub split_ratios: (f64, f64, f64),
    pub split_seed: u64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            split_ratios: (0.7, 0.1, 0.2),
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalConfig {
    pub top_k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { top_k: 10 }
    }
}

/// Every stage's settings. Missing keys take their defaults; unknown keys
/// are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub ingest: IngestConfig,
    pub cluster: ClusterConfig,
    pub vocab: VocabConfig,
    pub layout: LayoutConfig,
    pub encoder: EncoderConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub synth: SyntheticSpec,
    pub retrieval: RetrievalConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Write the effective configuration as `config.json` inside `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        let path = dir.join("config.json");
        std::fs::write(&path, self.to_json()).map_err(|e| Error::io(&path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.pretrain.validate()?;
        self.finetune.validate()?;
        self.synth.validate()?;
        if self.cluster.n_clusters == 0 {
            return Err(Error::Invalid("cluster.n_clusters must be positive".into()));
        }
        Ok(())
    }

    /// Use one seed for every stochastic stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.ingest.split_seed = seed;
        self.encoder.seed = seed;
        self.pretrain.seed = seed;
        self.finetune.seed = seed;
        self.synth.seed = seed;
    }
}
