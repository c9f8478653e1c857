use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{generate_synthetic_corpus, load_corpus, Corpus, Split, SynthSpec};
use crate::error::{Error, Result};
use crate::heads::HeadsConfig;
use crate::mlsa::MlsaConfig;
use crate::model::{EncoderConfig, EncoderKind, TaskMode};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Divide each document's loss by its mention count instead of summing.
    pub normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InventoryConfig {
    /// Characters with fewer training mentions collapse into OTHER.
    pub min_mentions: usize,
}

impl Default for InventoryConfig {
    fn default() -> Self {
        Self { min_mentions: 10 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Linear warmup, then constant.
    #[default]
    Constant,
    /// Linear warmup, then linear decay to zero at the last planned step.
    LinearDecay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Unset picks 1e-3 for the built-in encoder and 3e-5 for precomputed
    /// vectors.
    pub learning_rate: Option<f64>,
    pub warmup_fraction: f64,
    pub schedule: Schedule,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: None,
            warmup_fraction: 0.1,
            schedule: Schedule::Constant,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn effective_learning_rate(&self, encoder: EncoderKind) -> f64 {
        self.learning_rate.unwrap_or(match encoder {
            EncoderKind::Builtin => 1e-3,
            EncoderKind::Precomputed => 3e-5,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub max_epochs: usize,
    /// Epochs without a new best selection score before stopping.
    pub patience: usize,
    /// Split scored after every epoch for model selection.
    pub selection_split: Split,
    /// Stop once every trained task reaches this score on the selection
    /// split (coreference average F1, linking micro F1).
    pub target_score: Option<f64>,
    /// Start from all-zero parameters.
    pub zero_init: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            patience: 10,
            selection_split: Split::Dev,
            target_score: None,
            zero_init: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Corpus file or directory; the synthetic corpus is used when unset.
    pub corpus: Option<PathBuf>,
    pub singular_only: bool,
    pub synthetic: SynthSpec,
    pub synthetic_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            singular_only: true,
            synthetic: SynthSpec::default(),
            synthetic_seed: 0,
        }
    }
}

impl DataConfig {
    pub fn load(&self) -> Result<Corpus> {
        match &self.corpus {
            Some(path) => load_corpus(path, self.singular_only),
            None => generate_synthetic_corpus(&self.synthetic, self.synthetic_seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub encoder: EncoderConfig,
    pub mlsa: MlsaConfig,
    pub heads: HeadsConfig,
    pub loss: LossConfig,
    pub inventory: InventoryConfig,
    pub optimizer: OptimizerConfig,
    pub training: TrainingConfig,
    pub task: TaskMode,
    /// Seed of a single run.
    pub seed: u64,
    /// Seeds of repeated runs (ablations, sweeps, multi-seed evaluation).
    pub seeds: Vec<u64>,
    pub data: DataConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            mlsa: MlsaConfig::default(),
            heads: HeadsConfig::default(),
            loss: LossConfig::default(),
            inventory: InventoryConfig::default(),
            optimizer: OptimizerConfig::default(),
            training: TrainingConfig::default(),
            task: TaskMode::Joint,
            seed: 0,
            seeds: vec![0, 1, 2],
            data: DataConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.encoder.dim;
        if d == 0 {
            return Err(Error::Config("encoder.dim must be positive".into()));
        }
        if self.mlsa.layers > 0 && (self.mlsa.heads == 0 || !d.is_multiple_of(self.mlsa.heads)) {
            return Err(Error::Config(format!("mlsa.heads = {} does not divide d = {d}", self.mlsa.heads)));
        }
        if self.encoder.kind == EncoderKind::Builtin
            && self.encoder.layers > 0
            && (self.encoder.heads == 0 || !d.is_multiple_of(self.encoder.heads))
        {
            return Err(Error::Config(format!(
                "encoder.heads = {} does not divide d = {d}",
                self.encoder.heads
            )));
        }
        if self.heads.hidden_width == 0 {
            return Err(Error::Config("heads.hidden_width must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.optimizer.warmup_fraction) {
            return Err(Error::Config("optimizer.warmup_fraction must lie in [0, 1]".into()));
        }
        if self.training.max_epochs == 0 {
            return Err(Error::Config("training.max_epochs must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        Ok(())
    }

    /// Desk-scale setting used for the synthetic experiments: d = 32,
    /// a one-layer built-in encoder over short segments, two MLSA layers.
    pub fn toy() -> Self {
        let mut cfg = Self::default();
        cfg.encoder.dim = 32;
        cfg.encoder.layers = 1;
        cfg.encoder.heads = 4;
        cfg.encoder.max_segment_tokens = 16;
        cfg.encoder.max_positions = 16;
        cfg.mlsa.layers = 2;
        cfg.mlsa.heads = 4;
        cfg.heads.hidden_width = 32;
        cfg.inventory.min_mentions = 1;
        cfg
    }
}
