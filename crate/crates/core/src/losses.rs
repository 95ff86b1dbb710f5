//! Training objectives.
//!
//! All losses sum over labels and average over the batch, and all of them
//! are recorded on a [`Graph`] so they backpropagate into the model.

use crate::error::{CanError, Result};
use crate::graph::{BalanceTerms, Graph, Var};
use crate::kernels::Alignment;
use crate::tensor::Tensor;

/// Lower clamp applied to every logarithm argument.
pub const LOG_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Focusing exponent.
    pub gamma: f64,
    /// Weight of the attention term in the combined loss.
    pub alpha: f64,
    pub w_pos: Vec<f64>,
    pub w_neg: Vec<f64>,
    pub epsilon: f64,
}

impl LossConfig {
    pub fn new(gamma: f64, alpha: f64, w_pos: Vec<f64>, w_neg: Vec<f64>) -> Result<Self> {
        let cfg = LossConfig {
            gamma,
            alpha,
            w_pos,
            w_neg,
            epsilon: LOG_EPSILON,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Equal weights of one half per label.
    pub fn uniform(gamma: f64, alpha: f64, labels: usize) -> Self {
        LossConfig {
            gamma,
            alpha,
            w_pos: vec![0.5; labels],
            w_neg: vec![0.5; labels],
            epsilon: LOG_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(CanError::config(format!("gamma {} must be finite and >= 0", self.gamma)));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(CanError::config(format!("alpha {} must be finite and >= 0", self.alpha)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(CanError::config("log epsilon must lie in (0, 0.5)"));
        }
        if self.w_pos.len() != self.w_neg.len() || self.w_pos.is_empty() {
            return Err(CanError::config("positive and negative weights must cover the same labels"));
        }
        for (l, (&p, &n)) in self.w_pos.iter().zip(&self.w_neg).enumerate() {
            if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&n) || (p + n - 1.0).abs() > 1e-12 {
                return Err(CanError::config(format!(
                    "label {l}: weights ({p}, {n}) must lie in [0, 1] and sum to 1"
                )));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> usize {
        self.w_pos.len()
    }
}

/// `w₊ = N/(P+N)` and `w₋ = P/(P+N)` per label: the rarer side gets the
/// larger weight.
pub fn balance_weights(pos_counts: &[usize], neg_counts: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    if pos_counts.len() != neg_counts.len() {
        return Err(CanError::shape(format!(
            "{} positive counts vs {} negative counts",
            pos_counts.len(),
            neg_counts.len()
        )));
    }
    let mut w_pos = Vec::with_capacity(pos_counts.len());
    let mut w_neg = Vec::with_capacity(pos_counts.len());
    for (l, (&p, &n)) in pos_counts.iter().zip(neg_counts).enumerate() {
        let total = p + n;
        if total == 0 {
            return Err(CanError::config(format!("label {l} has no samples")));
        }
        w_pos.push(n as f64 / total as f64);
        w_neg.push(p as f64 / total as f64);
    }
    Ok((w_pos, w_neg))
}

pub fn bce_loss(g: &mut Graph, probs: Var, labels: &Tensor) -> Result<Var> {
    g.bce(probs, labels, LOG_EPSILON)
}

pub fn balance_loss(g: &mut Graph, probs: Var, labels: &Tensor, cfg: &LossConfig) -> Result<Var> {
    cfg.validate()?;
    let terms = BalanceTerms {
        w_pos: cfg.w_pos.clone(),
        w_neg: cfg.w_neg.clone(),
        gamma: cfg.gamma,
        epsilon: cfg.epsilon,
    };
    g.balance(probs, labels, terms)
}

/// Channel sum, clamped at zero, resized (corner-aligned bilinear) to
/// `target_hw` and divided by its per-sample maximum. A map whose maximum
/// is zero stays zero.
pub fn pathogenic_map(g: &mut Graph, features: Var, target_hw: (usize, usize)) -> Result<Var> {
    let summed = g.channel_sum(features)?;
    let positive = g.relu(summed);
    let resized = g.resize_bilinear(positive, target_hw, Alignment::Corners)?;
    Ok(g.max_normalize(resized))
}

/// Common map size for two feature stacks: the smaller extent on each axis.
pub fn attention_target(a: &[usize], b: &[usize]) -> Result<(usize, usize)> {
    if a.len() != 4 || b.len() != 4 || a[0] != b[0] {
        return Err(CanError::shape(format!(
            "attention loss needs two [N, C, H, W] stacks with equal N, got {a:?} and {b:?}"
        )));
    }
    Ok((a[2].min(b[2]), a[3].min(b[3])))
}

/// Batch mean of `‖map_a − map_b‖₂`.
pub fn attention_loss(g: &mut Graph, features_a: Var, features_b: Var) -> Result<Var> {
    let target = attention_target(g.shape(features_a), g.shape(features_b))?;
    let map_a = pathogenic_map(g, features_a, target)?;
    let map_b = pathogenic_map(g, features_b, target)?;
    let diff = g.sub(map_a, map_b)?;
    let norms = g.sample_norm(diff);
    Ok(g.mean(norms))
}

/// `α·attention + balance`. The attention term is omitted entirely when
/// `α = 0` or there is no second feature stack.
pub fn combined_loss(
    g: &mut Graph,
    probs: Var,
    labels: &Tensor,
    features_a: Var,
    features_b: Option<Var>,
    cfg: &LossConfig,
) -> Result<Var> {
    let bal = balance_loss(g, probs, labels, cfg)?;
    match features_b {
        Some(fb) if cfg.alpha > 0.0 => {
            let att = attention_loss(g, features_a, fb)?;
            let weighted = g.scale(att, cfg.alpha);
            g.add(weighted, bal)
        }
        _ => Ok(bal),
    }
}
