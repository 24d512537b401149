//! Declarative run configuration (TOML manifest).
//!
//! One file describes a whole run — data paths, version roles, split,
//! model family, training constants, grid, evaluation — and is the unit of
//! reproducibility: reruns from the same manifest are byte-comparable. CLI
//! flags override individual fields; the fully resolved config is recorded
//! in every output's metadata.

use serde::{Deserialize, Serialize};

use crate::embed::synthetic::SyntheticSpec;
use crate::embed::RangePolicy;
use crate::error::{Error, Result};
use crate::vae::VaeMode;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub corpus: String,
    pub embeddings: String,
    /// Optional pinned corpus digest; verified against the file when set.
    pub corpus_digest: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct VersionsConfig {
    /// Subtraction reference version.
    pub reference: String,
    /// Trained ("normal") version.
    pub target: String,
    pub anomalies: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.1,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RangeConfig {
    pub policy: RangePolicy,
}

impl Default for RangeConfig {
    fn default() -> Self {
        RangeConfig {
            policy: RangePolicy::Assert,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub mode: VaeMode,
    pub kl_weight: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mode: VaeMode::Deterministic,
            kl_weight: 0.0,
            bn_momentum: crate::vae::DEFAULT_BATCHNORM_MOMENTUM,
            bn_eps: crate::vae::DEFAULT_BATCHNORM_EPS,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lr: 1e-3,
            batch_size: 128,
            max_epochs: 200,
            patience: 20,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationArm {
    Subtraction,
    NoSubtraction,
    Both,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub hidden_layers: Vec<usize>,
    pub feature_dims: Vec<usize>,
    pub repeats: usize,
    pub ablation: AblationArm,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            hidden_layers: (1..=6).collect(),
            feature_dims: vec![8, 16, 32, 64, 128, 256],
            repeats: 3,
            ablation: AblationArm::Subtraction,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Empty means the default grid 0.1..=1.4 step 0.1.
    pub alphas: Vec<f64>,
    pub balanced_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            alphas: Vec::new(),
            balanced_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub base_seed: u64,
    pub workers: usize,
    pub out_dir: String,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            base_seed: 7,
            workers: 1,
            out_dir: "sweep_out".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingSection {
    pub provider: EmbeddingProvider,
    pub model_id: String,
    pub d: usize,
    pub cache_dir: String,
    pub seed: u64,
    /// Remote settings; only consulted when provider = "remote".
    pub remote: crate::embed::remote::RemoteConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingProvider {
    Remote,
    Synthetic,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            provider: EmbeddingProvider::Synthetic,
            model_id: "text-embedding-3-small".into(),
            d: 1536,
            cache_dir: "cache".into(),
            seed: 11,
            remote: crate::embed::remote::RemoteConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub versions: VersionsConfig,
    pub split: SplitConfig,
    pub range: RangeConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub grid: GridConfig,
    pub eval: EvalConfig,
    pub run: RunSection,
    pub embedding: EmbeddingSection,
    pub synthetic: Option<SyntheticSpec>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("manifest {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split.test_fraction must be in (0,1), got {}",
                self.split.test_fraction
            )));
        }
        if self.grid.hidden_layers.is_empty() || self.grid.feature_dims.is_empty() {
            return Err(Error::Config("grid must not be empty".into()));
        }
        if self.grid.repeats == 0 {
            return Err(Error::Config("grid.repeats must be positive".into()));
        }
        if let Some(spec) = &self.synthetic {
            spec.validate()?;
        }
        Ok(())
    }

    /// Alpha grid with the 0.1..=1.4 default when unset.
    pub fn alphas(&self) -> Vec<f64> {
        if self.eval.alphas.is_empty() {
            crate::anomaly::default_alphas()
        } else {
            self.eval.alphas.clone()
        }
    }
}
