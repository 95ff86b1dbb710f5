//! The cross-attention fusion head and the full two-backbone model.
//!
//! Raw backbone features are relu-gated, projected to a common width by 1×1
//! transition convolutions, fused elementwise, and optionally concatenated
//! with both projected inputs before global average pooling and the
//! per-label sigmoid classifier.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CanError, Result};
use crate::graph::{Graph, Var};
use crate::layers::{Backbone, BackboneSpec, ConvLayer, DenseLayer, ParamBinder};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    #[default]
    Hadamard,
    Add,
    Max,
}

impl FusionMode {
    pub const ALL: [FusionMode; 3] = [FusionMode::Hadamard, FusionMode::Add, FusionMode::Max];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Hadamard => "hadamard",
            FusionMode::Add => "add",
            FusionMode::Max => "max",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = CanError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hadamard" | "had" => Ok(FusionMode::Hadamard),
            "add" => Ok(FusionMode::Add),
            "max" => Ok(FusionMode::Max),
            other => Err(CanError::config(format!("unknown fusion mode {other:?}"))),
        }
    }
}

/// 1×1 convolution mapping backbone features to the shared width.
pub fn transition(g: &mut Graph, features: Var, layer: &ConvLayer, bound: &mut ParamBinder) -> Result<Var> {
    if layer.kernel_size() != 1 {
        return Err(CanError::shape(format!(
            "transition layers are 1x1, got a {}x{} kernel",
            layer.kernel_size(),
            layer.kernel_size()
        )));
    }
    layer.forward(g, features, bound)
}

pub fn fuse(g: &mut Graph, fa: Var, fb: Var, mode: FusionMode) -> Result<Var> {
    match mode {
        FusionMode::Hadamard => g.mul(fa, fb),
        FusionMode::Add => g.add(fa, fb),
        FusionMode::Max => g.maximum(fa, fb),
    }
}

/// `[F_CA | F_A | F_B]` along channels when `concat_all`, else `F_CA` alone.
pub fn assemble(g: &mut Graph, f_ca: Var, fa: Var, fb: Var, concat_all: bool) -> Result<Var> {
    if g.shape(f_ca) != g.shape(fa) || g.shape(fa) != g.shape(fb) {
        return Err(CanError::shape(format!(
            "assemble: {:?}, {:?} and {:?} must match",
            g.shape(f_ca),
            g.shape(fa),
            g.shape(fb)
        )));
    }
    if concat_all {
        g.concat_channels(&[f_ca, fa, fb])
    } else {
        Ok(f_ca)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone_a: BackboneSpec,
    /// `None` builds the single-backbone baseline (no transition or fusion).
    pub backbone_b: Option<BackboneSpec>,
    pub labels: usize,
    #[serde(default)]
    pub fusion: FusionMode,
    #[serde(default = "yes")]
    pub concat_all: bool,
    #[serde(default)]
    pub dropout: f64,
    pub input_hw: [usize; 2],
    #[serde(default = "one")]
    pub in_channels: usize,
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.backbone_a.validate()?;
        if self.labels == 0 {
            return Err(CanError::config("label count must be positive"));
        }
        if self.in_channels == 0 {
            return Err(CanError::config("input channel count must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CanError::config(format!("dropout {} must lie in [0, 1)", self.dropout)));
        }
        let hw = (self.input_hw[0], self.input_hw[1]);
        let extent_a = self.backbone_a.out_extent(hw)?;
        if let Some(b) = &self.backbone_b {
            b.validate()?;
            let extent_b = b.out_extent(hw)?;
            if extent_a != extent_b {
                return Err(CanError::config(format!(
                    "backbones emit {extent_a:?} and {extent_b:?} feature grids; fusion needs identical extents"
                )));
            }
        }
        Ok(())
    }

    pub fn is_dual(&self) -> bool {
        self.backbone_b.is_some()
    }

    /// `min(C_A, C_B)`; for a single backbone, its own width.
    pub fn tran_n(&self) -> usize {
        let ca = self.backbone_a.out_channels();
        match &self.backbone_b {
            Some(b) => ca.min(b.out_channels()),
            None => ca,
        }
    }

    pub fn classifier_in(&self) -> usize {
        if self.is_dual() && self.concat_all {
            3 * self.tran_n()
        } else {
            self.tran_n()
        }
    }

    pub fn feature_extent(&self) -> Result<(usize, usize)> {
        self.backbone_a.out_extent((self.input_hw[0], self.input_hw[1]))
    }
}

/// Second branch of a dual model.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossBranch {
    pub backbone_b: Backbone,
    pub transition_a: ConvLayer,
    pub transition_b: ConvLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanModel {
    pub config: ModelConfig,
    pub backbone_a: Backbone,
    pub cross: Option<CrossBranch>,
    pub classifier: DenseLayer,
}

/// Seeds for the independently initialised parts of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitSeeds {
    pub backbone_a: u64,
    pub backbone_b: u64,
    pub head: u64,
}

impl InitSeeds {
    /// Distinct seeds derived from one run seed.
    pub fn derive(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0ca7_5eed);
        InitSeeds {
            backbone_a: rng.random(),
            backbone_b: rng.random(),
            head: rng.random(),
        }
    }
}

/// Graph handles produced by [`CanModel::forward`].
#[derive(Debug, Clone)]
pub struct Forward {
    pub probs: Var,
    pub logits: Var,
    /// Pre-activation last-block maps of backbone A.
    pub raw_a: Var,
    /// Pre-activation last-block maps of backbone B (dual models only).
    pub raw_b: Option<Var>,
    /// The maps fed to global average pooling; their channel order matches
    /// the classifier's input order.
    pub features: Var,
    /// Parameter handles in canonical order (see [`CanModel::tensors`]).
    pub params: Vec<Var>,
}

impl CanModel {
    pub fn init(config: ModelConfig, seeds: InitSeeds) -> Result<Self> {
        config.validate()?;
        let mut rng_a = ChaCha8Rng::seed_from_u64(seeds.backbone_a);
        let backbone_a = Backbone::init(&mut rng_a, config.in_channels, &config.backbone_a);
        let mut rng_head = ChaCha8Rng::seed_from_u64(seeds.head);
        let cross = match &config.backbone_b {
            Some(spec_b) => {
                let mut rng_b = ChaCha8Rng::seed_from_u64(seeds.backbone_b);
                let backbone_b = Backbone::init(&mut rng_b, config.in_channels, spec_b);
                let tran_n = config.tran_n();
                let transition_a =
                    ConvLayer::init(&mut rng_head, backbone_a.out_channels(), tran_n, 1, 0, 1.0);
                let transition_b =
                    ConvLayer::init(&mut rng_head, backbone_b.out_channels(), tran_n, 1, 0, 1.0);
                Some(CrossBranch {
                    backbone_b,
                    transition_a,
                    transition_b,
                })
            }
            None => None,
        };
        let classifier = DenseLayer::init(&mut rng_head, config.classifier_in(), config.labels);
        let model = CanModel {
            config,
            backbone_a,
            cross,
            classifier,
        };
        model.check()?;
        Ok(model)
    }

    /// Verify parameter shapes against the configuration.
    pub fn check(&self) -> Result<()> {
        let cfg = &self.config;
        cfg.validate()?;
        let widths = |bb: &Backbone| bb.blocks.iter().map(ConvLayer::c_out).collect::<Vec<_>>();
        if widths(&self.backbone_a) != cfg.backbone_a.widths {
            return Err(CanError::shape("backbone A does not match its configured widths"));
        }
        match (&self.cross, &cfg.backbone_b) {
            (Some(cross), Some(spec_b)) => {
                if widths(&cross.backbone_b) != spec_b.widths {
                    return Err(CanError::shape("backbone B does not match its configured widths"));
                }
                let tran_n = cfg.tran_n();
                for (t, c_in) in [
                    (&cross.transition_a, self.backbone_a.out_channels()),
                    (&cross.transition_b, cross.backbone_b.out_channels()),
                ] {
                    if t.c_out() != tran_n || t.c_in() != c_in || t.kernel_size() != 1 {
                        return Err(CanError::shape(format!(
                            "transition layer {:?} does not map {c_in} channels to tran_N = {tran_n}",
                            t.kernel.shape()
                        )));
                    }
                }
            }
            (None, None) => {}
            _ => return Err(CanError::shape("model branches disagree with the configuration")),
        }
        if self.classifier.in_dim() != cfg.classifier_in() || self.classifier.out_dim() != cfg.labels {
            return Err(CanError::shape(format!(
                "classifier {:?} should be ({}, {})",
                self.classifier.weight.shape(),
                cfg.labels,
                cfg.classifier_in()
            )));
        }
        Ok(())
    }

    pub fn labels(&self) -> usize {
        self.config.labels
    }

    /// All parameter tensors in canonical order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = self.backbone_a.tensors();
        if let Some(c) = &self.cross {
            out.extend(c.backbone_b.tensors());
            out.extend([&c.transition_a.kernel, &c.transition_a.bias]);
            out.extend([&c.transition_b.kernel, &c.transition_b.bias]);
        }
        out.extend([&self.classifier.weight, &self.classifier.bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.backbone_a.tensors_mut();
        if let Some(c) = &mut self.cross {
            out.extend(c.backbone_b.tensors_mut());
            out.extend([&mut c.transition_a.kernel, &mut c.transition_a.bias]);
            out.extend([&mut c.transition_b.kernel, &mut c.transition_b.bias]);
        }
        out.extend([&mut self.classifier.weight, &mut self.classifier.bias]);
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let backbone = |prefix: &str, bb: &Backbone| -> Vec<String> {
            (0..bb.blocks.len())
                .flat_map(|i| [format!("{prefix}.block{i}.kernel"), format!("{prefix}.block{i}.bias")])
                .collect()
        };
        let mut out = backbone("backbone_a", &self.backbone_a);
        if let Some(c) = &self.cross {
            out.extend(backbone("backbone_b", &c.backbone_b));
            out.extend([
                "transition_a.kernel".to_string(),
                "transition_a.bias".to_string(),
                "transition_b.kernel".to_string(),
                "transition_b.bias".to_string(),
            ]);
        }
        out.extend(["classifier.weight".to_string(), "classifier.bias".to_string()]);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Replace every parameter, in canonical order.
    pub fn set_tensors(&mut self, values: Vec<Tensor>) -> Result<()> {
        let mut slots = self.tensors_mut();
        if slots.len() != values.len() {
            return Err(CanError::shape(format!(
                "model has {} parameter tensors, {} supplied",
                slots.len(),
                values.len()
            )));
        }
        for (slot, v) in slots.iter_mut().zip(&values) {
            if slot.shape() != v.shape() {
                return Err(CanError::shape(format!(
                    "parameter shape {:?} cannot take {:?}",
                    slot.shape(),
                    v.shape()
                )));
            }
        }
        for (slot, v) in slots.into_iter().zip(values) {
            *slot = v;
        }
        Ok(())
    }

    /// Record the forward pass: backbones → relu → transition → fuse →
    /// assemble → global average pool → dropout → dense → sigmoid.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        images: Var,
        training: bool,
        rng: &mut R,
    ) -> Result<Forward> {
        let shape = g.shape(images).to_vec();
        if shape.len() != 4
            || shape[1] != self.config.in_channels
            || shape[2..] != self.config.input_hw[..]
        {
            return Err(CanError::shape(format!(
                "model expects [N, {}, {}, {}] images, got {shape:?}",
                self.config.in_channels, self.config.input_hw[0], self.config.input_hw[1]
            )));
        }
        let mut bound = ParamBinder::new(training);
        let raw_a = self.backbone_a.forward(g, images, &mut bound)?;
        let (raw_b, features) = match &self.cross {
            Some(cross) => {
                let raw_b = cross.backbone_b.forward(g, images, &mut bound)?;
                let gated_a = g.relu(raw_a);
                let gated_b = g.relu(raw_b);
                let fa = transition(g, gated_a, &cross.transition_a, &mut bound)?;
                let fb = transition(g, gated_b, &cross.transition_b, &mut bound)?;
                let f_ca = fuse(g, fa, fb, self.config.fusion)?;
                (Some(raw_b), assemble(g, f_ca, fa, fb, self.config.concat_all)?)
            }
            None => (None, g.relu(raw_a)),
        };
        let pooled = g.global_avg_pool(features)?;
        let dropped = g.dropout(pooled, self.config.dropout, training, rng)?;
        let logits = self.classifier.forward(g, dropped, &mut bound)?;
        let probs = g.sigmoid(logits);
        Ok(Forward {
            probs,
            logits,
            raw_a,
            raw_b,
            features,
            params: bound.into_vars(),
        })
    }

    /// Eval-mode probabilities for a batch of images, `[N, L]`.
    pub fn predict(&self, images: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(images.clone());
        // eval mode never draws from the rng
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut g, x, false, &mut rng)?;
        Ok(g.value(out.probs).clone())
    }

    /// Eval-mode probabilities together with the assembled feature maps.
    pub fn predict_with_features(&self, images: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let x = g.constant(images.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut g, x, false, &mut rng)?;
        Ok((g.value(out.probs).clone(), g.value(out.features).clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dual_config(fusion: FusionMode) -> ModelConfig {
        ModelConfig {
            backbone_a: BackboneSpec::new(&[4, 6]),
            backbone_b: Some(BackboneSpec::new(&[4, 8])),
            labels: 3,
            fusion,
            concat_all: true,
            dropout: 0.2,
            input_hw: [8, 8],
            in_channels: 1,
        }
    }

    #[test]
    fn tran_n_is_min_width() {
        let cfg = dual_config(FusionMode::Hadamard);
        assert_eq!(cfg.tran_n(), 6);
        assert_eq!(cfg.classifier_in(), 18);
        let model = CanModel::init(cfg, InitSeeds::derive(1)).unwrap();
        let cross = model.cross.as_ref().unwrap();
        assert_eq!(cross.transition_a.kernel.shape(), &[6, 6, 1, 1]);
        assert_eq!(cross.transition_b.kernel.shape(), &[6, 8, 1, 1]);
        assert_eq!(model.classifier.weight.shape(), &[3, 18]);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let mut cfg = dual_config(FusionMode::Hadamard);
        cfg.backbone_b = Some(BackboneSpec::new(&[4, 8, 8]));
        assert!(matches!(cfg.validate(), Err(CanError::Config(_))));
    }

    #[test]
    fn names_align_with_tensors() {
        let model = CanModel::init(dual_config(FusionMode::Add), InitSeeds::derive(2)).unwrap();
        assert_eq!(model.param_names().len(), model.tensors().len());
    }

    #[test]
    fn fusion_mode_parses() {
        assert_eq!("max".parse::<FusionMode>().unwrap(), FusionMode::Max);
        assert!("outer".parse::<FusionMode>().is_err());
        assert_eq!(serde_json::to_string(&FusionMode::Hadamard).unwrap(), "\"hadamard\"");
    }
}
