//! Checkpoint directories: a JSON `manifest.json` plus tensor blobs, each
//! blob a back-to-back sequence of `CANT` tensors in manifest order.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cross_attention::{CanModel, InitSeeds, ModelConfig};
use crate::error::{CanError, Result};
use crate::tensor::{decode_all, encode_all, Tensor};
use crate::train::config::RunConfig;

pub const MANIFEST: &str = "manifest.json";
const MODEL_BLOB: &str = "model.bin";
const VELOCITY_BLOB: &str = "velocity.bin";
const BEST_BLOB: &str = "best.bin";
const FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelManifest {
    format: u32,
    config: ModelConfig,
    fusion: String,
    labels: usize,
    params: Vec<ParamEntry>,
}

/// Build a model of the given configuration from tensors in canonical order.
pub fn model_from_tensors(config: ModelConfig, tensors: Vec<Tensor>) -> Result<CanModel> {
    let mut model = CanModel::init(config, InitSeeds::derive(0))?;
    model.set_tensors(tensors)?;
    Ok(model)
}

fn manifest_for(model: &CanModel) -> ModelManifest {
    ModelManifest {
        format: FORMAT,
        config: model.config.clone(),
        fusion: model.config.fusion.to_string(),
        labels: model.labels(),
        params: model
            .param_names()
            .into_iter()
            .zip(model.tensors())
            .map(|(name, t)| ParamEntry {
                name,
                shape: t.shape().to_vec(),
            })
            .collect(),
    }
}

fn read_blob(dir: &Path, name: &str) -> Result<Vec<Tensor>> {
    decode_all(&fs::read(dir.join(name))?)
}

fn check_manifest_shapes(manifest: &ModelManifest, model: &CanModel) -> Result<()> {
    let expected = manifest_for(model).params;
    if manifest.params != expected {
        return Err(CanError::shape("manifest parameter table disagrees with the stored tensors"));
    }
    Ok(())
}

/// Write a model-only checkpoint.
pub fn save_model(dir: impl AsRef<Path>, model: &CanModel) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let manifest = serde_json::json!({ "model": manifest_for(model) });
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    fs::write(dir.join(MODEL_BLOB), encode_all(&model.tensors())?)?;
    Ok(())
}

#[derive(Deserialize)]
struct ModelOnly {
    model: ModelManifest,
}

/// Load the model of any checkpoint directory. For a training checkpoint
/// this is the best-on-validation model when one was recorded.
pub fn load_model(dir: impl AsRef<Path>) -> Result<CanModel> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let ModelOnly { model: manifest } = serde_json::from_str(&text)?;
    if manifest.format != FORMAT {
        return Err(CanError::Version {
            found: manifest.format,
            expected: FORMAT,
        });
    }
    let blob = if dir.join(BEST_BLOB).exists() {
        BEST_BLOB
    } else {
        MODEL_BLOB
    };
    let model = model_from_tensors(manifest.config.clone(), read_blob(dir, blob)?)?;
    check_manifest_shapes(&manifest, &model)?;
    Ok(model)
}

/// Serializable ChaCha stream position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// Word position as a decimal string (it is a `u128`).
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| CanError::config(format!("bad rng word position {:?}", self.word_pos)))?;
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub mean_train_loss: f64,
    pub val_mean_auroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Best {
    pub epoch: usize,
    pub val_mean_auroc: f64,
    pub model: CanModel,
}

/// Complete training state; resuming from it reproduces the uninterrupted
/// run bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub model: CanModel,
    pub velocity: Vec<Tensor>,
    /// Completed epochs.
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    pub rng: RngState,
    pub w_pos: Vec<f64>,
    pub w_neg: Vec<f64>,
    pub best: Option<Best>,
    pub epochs_since_best: usize,
    pub history: Vec<EpochLog>,
    pub finished: bool,
}

#[derive(Serialize, Deserialize)]
struct TrainManifest {
    model: ModelManifest,
    run: RunConfig,
    epoch: usize,
    step: usize,
    rng: RngState,
    w_pos: Vec<f64>,
    w_neg: Vec<f64>,
    best_epoch: Option<usize>,
    best_val_mean_auroc: Option<f64>,
    epochs_since_best: usize,
    history: Vec<EpochLog>,
    finished: bool,
}

impl Checkpoint {
    /// The model to evaluate: best on validation, else the latest weights.
    pub fn selected_model(&self) -> &CanModel {
        self.best.as_ref().map_or(&self.model, |b| &b.model)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let manifest = TrainManifest {
            model: manifest_for(&self.model),
            run: self.config.clone(),
            epoch: self.epoch,
            step: self.step,
            rng: self.rng.clone(),
            w_pos: self.w_pos.clone(),
            w_neg: self.w_neg.clone(),
            best_epoch: self.best.as_ref().map(|b| b.epoch),
            best_val_mean_auroc: self.best.as_ref().map(|b| b.val_mean_auroc),
            epochs_since_best: self.epochs_since_best,
            history: self.history.clone(),
            finished: self.finished,
        };
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        fs::write(dir.join(MODEL_BLOB), encode_all(&self.model.tensors())?)?;
        let velocity: Vec<&Tensor> = self.velocity.iter().collect();
        fs::write(dir.join(VELOCITY_BLOB), encode_all(&velocity)?)?;
        match &self.best {
            Some(b) => fs::write(dir.join(BEST_BLOB), encode_all(&b.model.tensors())?)?,
            None => {
                if dir.join(BEST_BLOB).exists() {
                    fs::remove_file(dir.join(BEST_BLOB))?;
                }
            }
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join(MANIFEST))?;
        let m: TrainManifest = serde_json::from_str(&text)
            .map_err(|e| CanError::config(format!("{} is not a training checkpoint: {e}", dir.display())))?;
        if m.model.format != FORMAT {
            return Err(CanError::Version {
                found: m.model.format,
                expected: FORMAT,
            });
        }
        let model = model_from_tensors(m.model.config.clone(), read_blob(dir, MODEL_BLOB)?)?;
        check_manifest_shapes(&m.model, &model)?;
        let velocity = read_blob(dir, VELOCITY_BLOB)?;
        if velocity.len() != model.tensors().len()
            || velocity.iter().zip(model.tensors()).any(|(v, p)| v.shape() != p.shape())
        {
            return Err(CanError::shape("velocity buffers do not match the model"));
        }
        let best = match (m.best_epoch, m.best_val_mean_auroc) {
            (Some(epoch), Some(val_mean_auroc)) => Some(Best {
                epoch,
                val_mean_auroc,
                model: model_from_tensors(m.model.config.clone(), read_blob(dir, BEST_BLOB)?)?,
            }),
            _ => None,
        };
        Ok(Checkpoint {
            config: m.run,
            model,
            velocity,
            epoch: m.epoch,
            step: m.step,
            rng: m.rng,
            w_pos: m.w_pos,
            w_neg: m.w_neg,
            best,
            epochs_since_best: m.epochs_since_best,
            history: m.history,
            finished: m.finished,
        })
    }
}
