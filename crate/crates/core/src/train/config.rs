use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cross_attention::{FusionMode, InitSeeds, ModelConfig};
use crate::data::{Dataset, GenConfig};
use crate::error::{CanError, Result};
use crate::layers::BackboneSpec;
use crate::losses::{balance_weights, LossConfig, LOG_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Class-weighted focal-style balance loss.
    #[default]
    Balance,
    /// Plain binary cross entropy.
    Bce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    /// `"auto"`: computed once from the training split's label counts.
    Auto(AutoWeights),
    Explicit { pos: Vec<f64>, neg: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoWeights {
    Auto,
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Auto(AutoWeights::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossSpec {
    pub kind: LossKind,
    pub gamma: f64,
    pub alpha: f64,
    pub weights: WeightSpec,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec {
            kind: LossKind::Balance,
            gamma: 2.0,
            alpha: 0.01,
            weights: WeightSpec::default(),
        }
    }
}

impl LossSpec {
    /// Resolve `"auto"` weights against the training split.
    pub fn resolve(&self, train: &Dataset) -> Result<LossConfig> {
        let (w_pos, w_neg) = match &self.weights {
            WeightSpec::Auto(_) => balance_weights(train.pos_counts(), train.neg_counts())?,
            WeightSpec::Explicit { pos, neg } => {
                if pos.len() != train.labels() {
                    return Err(CanError::config(format!(
                        "{} explicit weights for {} labels",
                        pos.len(),
                        train.labels()
                    )));
                }
                (pos.clone(), neg.clone())
            }
        };
        let cfg = LossConfig {
            gamma: self.gamma,
            alpha: self.alpha,
            w_pos,
            w_neg,
            epsilon: LOG_EPSILON,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub momentum: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 0.001,
            momentum: 0.9,
        }
    }
}

/// Where a run's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSpec {
    Files {
        train: PathBuf,
        val: PathBuf,
        #[serde(default)]
        test: Option<PathBuf>,
    },
    Generated {
        generate: GenConfig,
        #[serde(default = "default_fractions")]
        fractions: (f64, f64, f64),
        #[serde(default)]
        split_seed: u64,
    },
}

fn default_fractions() -> (f64, f64, f64) {
    (0.8, 0.1, 0.1)
}

pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Option<Dataset>,
}

impl DataSpec {
    /// Relative paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<Splits> {
        match self {
            DataSpec::Files { train, val, test } => Ok(Splits {
                train: Dataset::load(base.join(train))?,
                val: Dataset::load(base.join(val))?,
                test: test.as_ref().map(|t| Dataset::load(base.join(t))).transpose()?,
            }),
            DataSpec::Generated {
                generate,
                fractions,
                split_seed,
            } => {
                let all = crate::data::generate(generate)?;
                let (train, val, test) = crate::data::split(&all, *fractions, *split_seed)?;
                Ok(Splits {
                    train,
                    val,
                    test: Some(test),
                })
            }
        }
    }
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub backbone_a: BackboneSpec,
    /// `None` trains the single-backbone baseline.
    pub backbone_b: Option<BackboneSpec>,
    pub fusion: FusionMode,
    pub concat_all: bool,
    pub dropout: f64,
    /// Side of the square model input; larger images are randomly cropped
    /// during training and centre-cropped for evaluation.
    pub crop: usize,
    pub loss: LossSpec,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: Option<usize>,
    /// Hard cap on optimizer steps across the whole run.
    pub max_steps: Option<usize>,
    pub seed: u64,
    /// Overrides the seeds derived from `seed`.
    pub init_seeds: Option<InitSeeds>,
    pub data: Option<DataSpec>,
    pub out_dir: Option<PathBuf>,
    /// Write a resumable checkpoint after every epoch.
    pub checkpoint_every_epoch: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            backbone_a: BackboneSpec::new(&[8, 16, 24]),
            backbone_b: Some(BackboneSpec::new(&[8, 16, 32])),
            fusion: FusionMode::Hadamard,
            concat_all: true,
            dropout: 0.2,
            crop: 64,
            loss: LossSpec::default(),
            optimizer: OptimizerConfig::default(),
            batch_size: 16,
            epochs: 10,
            warmup_epochs: 1,
            patience: Some(5),
            max_steps: None,
            seed: 0,
            init_seeds: None,
            data: None,
            out_dir: None,
            checkpoint_every_epoch: true,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CanError::config(format!("invalid run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn seeds(&self) -> InitSeeds {
        self.init_seeds.unwrap_or_else(|| InitSeeds::derive(self.seed))
    }

    pub fn model_config(&self, labels: usize) -> ModelConfig {
        ModelConfig {
            backbone_a: self.backbone_a.clone(),
            backbone_b: self.backbone_b.clone(),
            labels,
            fusion: self.fusion,
            concat_all: self.concat_all,
            dropout: self.dropout,
            input_hw: [self.crop, self.crop],
            in_channels: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CanError::config("batch size must be at least 1"));
        }
        let lr = self.optimizer.lr;
        if !(lr.is_finite() && lr > 0.0) {
            return Err(CanError::config(format!("learning rate {lr} must be positive")));
        }
        if !(0.0..1.0).contains(&self.optimizer.momentum) {
            return Err(CanError::config("momentum must lie in [0, 1)"));
        }
        if self.crop == 0 {
            return Err(CanError::config("crop size must be positive"));
        }
        let seeds = self.seeds();
        if let Some(b) = &self.backbone_b {
            if *b == self.backbone_a && seeds.backbone_a == seeds.backbone_b {
                return Err(CanError::config(
                    "identical backbones with identical seeds would be exact copies",
                ));
            }
        }
        self.model_config(1).validate()?;
        LossConfig::uniform(self.loss.gamma, self.loss.alpha, 1).validate()
    }
}
