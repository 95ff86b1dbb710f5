use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cross_attention::{CanModel, InitSeeds};
use crate::data::{Dataset, Window};
use crate::error::{CanError, Result};
use crate::graph::{Graph, Var};
use crate::layers::Backbone;
use crate::losses::{attention_loss, bce_loss, combined_loss, LossConfig};
use crate::metrics::evaluate;
use crate::tensor::Tensor;
use crate::train::checkpoint::{Best, Checkpoint, EpochLog, RngState};
use crate::train::config::{LossKind, RunConfig};
use crate::train::optim::sgd_step;

const EVAL_BATCH: usize = 64;

/// Objective for one batch, recorded on `g`.
pub fn objective(
    g: &mut Graph,
    kind: LossKind,
    cfg: &LossConfig,
    probs: Var,
    labels: &Tensor,
    raw_a: Var,
    raw_b: Option<Var>,
) -> Result<Var> {
    match kind {
        LossKind::Balance => combined_loss(g, probs, labels, raw_a, raw_b, cfg),
        LossKind::Bce => {
            let bce = bce_loss(g, probs, labels)?;
            match raw_b {
                Some(rb) if cfg.alpha > 0.0 => {
                    let att = attention_loss(g, raw_a, rb)?;
                    let weighted = g.scale(att, cfg.alpha);
                    g.add(weighted, bce)
                }
                _ => Ok(bce),
            }
        }
    }
}

/// Eval-mode objective over a whole dataset (centre crops), averaged per
/// sample.
pub fn dataset_loss(model: &CanModel, dataset: &Dataset, kind: LossKind, cfg: &LossConfig) -> Result<f64> {
    let Some(hw) = dataset.image_hw() else {
        return Err(CanError::config("cannot compute a loss over an empty dataset"));
    };
    let window = Window::center(hw, model.config.input_hw[0]);
    let indices: Vec<usize> = (0..dataset.len()).collect();
    // eval mode never draws from the rng
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut total = 0.0;
    for chunk in indices.chunks(EVAL_BATCH) {
        let mut g = Graph::new();
        let images = g.constant(dataset.image_batch(chunk, &vec![window; chunk.len()])?);
        let labels = dataset.label_tensor(chunk)?;
        let out = model.forward(&mut g, images, false, &mut rng)?;
        let loss = objective(&mut g, kind, cfg, out.probs, &labels, out.raw_a, out.raw_b)?;
        total += g.value(loss).item()? * chunk.len() as f64;
    }
    Ok(total / dataset.len() as f64)
}

/// Hyperparameters of one pass over the training data.
pub(crate) struct EpochPlan<'a> {
    pub kind: LossKind,
    pub loss: &'a LossConfig,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Remaining step budget, if any.
    pub step_budget: Option<usize>,
}

pub(crate) struct EpochResult {
    pub steps: usize,
    pub mean_loss: f64,
}

/// One shuffled pass of random-crop minibatch SGD. `step` is the global
/// step counter, used to name a divergence.
pub(crate) fn train_epoch(
    model: &mut CanModel,
    velocity: &mut [Tensor],
    train: &Dataset,
    plan: &EpochPlan,
    rng: &mut ChaCha8Rng,
    step: &mut usize,
) -> Result<EpochResult> {
    let hw = train
        .image_hw()
        .ok_or_else(|| CanError::config("the training split is empty"))?;
    let crop = model.config.input_hw[0];
    if hw.0 < crop || hw.1 < crop {
        return Err(CanError::config(format!("{hw:?} images cannot be cropped to {crop}")));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    let mut steps = 0;
    let mut loss_sum = 0.0;
    for batch in order.chunks(plan.batch_size) {
        if plan.step_budget.is_some_and(|b| steps >= b) {
            break;
        }
        let windows: Vec<Window> = batch.iter().map(|_| Window::random(rng, hw, crop)).collect();
        let mut g = Graph::new();
        let images = g.constant(train.image_batch(batch, &windows)?);
        let labels = train.label_tensor(batch)?;
        let out = model.forward(&mut g, images, true, rng)?;
        let loss = objective(&mut g, plan.kind, plan.loss, out.probs, &labels, out.raw_a, out.raw_b)?;
        let value = g.value(loss).item()?;
        if !value.is_finite() {
            return Err(CanError::Divergence {
                step: *step,
                detail: format!("loss is {value}"),
            });
        }
        g.backward(loss)?;
        let grads: Vec<Tensor> = out.params.iter().map(|&v| g.grad_or_zeros(v)).collect();
        drop(g);
        let mut params = model.tensors_mut();
        sgd_step(&mut params, &grads, plan.lr, plan.momentum, velocity)?;
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(CanError::Divergence {
                step: *step,
                detail: format!("parameter tensor {i} became non-finite"),
            });
        }
        loss_sum += value;
        steps += 1;
        *step += 1;
    }
    Ok(EpochResult {
        steps,
        mean_loss: if steps == 0 { 0.0 } else { loss_sum / steps as f64 },
    })
}

/// Warmed-up backbones and the solo objective of each before and after.
#[derive(Debug, Clone, PartialEq)]
pub struct Warmup {
    pub backbone_a: Backbone,
    pub backbone_b: Option<Backbone>,
    /// `(initial, final)` eval-mode balance loss per backbone; empty when no
    /// warmup epochs ran.
    pub solo_losses: Vec<(f64, f64)>,
}

/// Train each backbone alone, under a temporary GAP + classifier head and
/// the balance loss, then discard the heads.
pub fn warmup(config: &RunConfig, train: &Dataset) -> Result<Warmup> {
    config.validate()?;
    let loss = config.loss.resolve(train)?;
    let seeds = config.seeds();
    let full = config.model_config(train.labels());
    let mut specs = vec![(full.backbone_a.clone(), seeds.backbone_a)];
    if let Some(b) = &full.backbone_b {
        specs.push((b.clone(), seeds.backbone_b));
    }
    let mut backbones = Vec::new();
    let mut solo_losses = Vec::new();
    for (i, (spec, seed)) in specs.into_iter().enumerate() {
        let solo_cfg = crate::cross_attention::ModelConfig {
            backbone_a: spec,
            backbone_b: None,
            ..full.clone()
        };
        let head = InitSeeds::derive(seed ^ 0x5eed_0f_4ead).head;
        let mut model = CanModel::init(
            solo_cfg,
            InitSeeds {
                backbone_a: seed,
                backbone_b: seed,
                head,
            },
        )?;
        if config.warmup_epochs > 0 {
            let before = dataset_loss(&model, train, LossKind::Balance, &loss)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1 + i as u64);
            let mut velocity: Vec<Tensor> = model.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
            let plan = EpochPlan {
                kind: LossKind::Balance,
                loss: &loss,
                batch_size: config.batch_size,
                lr: config.optimizer.lr,
                momentum: config.optimizer.momentum,
                step_budget: None,
            };
            let mut step = 0;
            for _ in 0..config.warmup_epochs {
                train_epoch(&mut model, &mut velocity, train, &plan, &mut rng, &mut step)?;
            }
            solo_losses.push((before, dataset_loss(&model, train, LossKind::Balance, &loss)?));
        }
        backbones.push(model.backbone_a);
    }
    let backbone_b = (backbones.len() == 2).then(|| backbones.pop()).flatten();
    let backbone_a = backbones.pop().expect("backbone A is always present");
    Ok(Warmup {
        backbone_a,
        backbone_b,
        solo_losses,
    })
}

/// Fresh training state: warmed-up backbones, seeded head and transitions,
/// zero momentum, loss weights frozen from the training split.
pub fn init_checkpoint(config: &RunConfig, train: &Dataset) -> Result<Checkpoint> {
    config.validate()?;
    let loss = config.loss.resolve(train)?;
    let mut model = CanModel::init(config.model_config(train.labels()), config.seeds())?;
    let warm = warmup(config, train)?;
    model.backbone_a = warm.backbone_a;
    if let (Some(cross), Some(b)) = (model.cross.as_mut(), warm.backbone_b) {
        cross.backbone_b = b;
    }
    let velocity = model.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
    Ok(Checkpoint {
        config: config.clone(),
        model,
        velocity,
        epoch: 0,
        step: 0,
        rng: RngState::capture(&ChaCha8Rng::seed_from_u64(config.seed)),
        w_pos: loss.w_pos,
        w_neg: loss.w_neg,
        best: None,
        epochs_since_best: 0,
        history: Vec::new(),
        finished: false,
    })
}

impl Checkpoint {
    pub fn loss_config(&self) -> Result<LossConfig> {
        LossConfig::new(
            self.config.loss.gamma,
            self.config.loss.alpha,
            self.w_pos.clone(),
            self.w_neg.clone(),
        )
    }

    pub fn is_done(&self) -> bool {
        self.finished || self.epoch >= self.config.epochs
    }
}

/// Continue training until the run is done or `until_epoch` epochs have
/// completed. `on_epoch` sees the state after every epoch.
pub fn run_epochs(
    ckpt: &mut Checkpoint,
    train: &Dataset,
    val: &Dataset,
    until_epoch: Option<usize>,
    mut on_epoch: impl FnMut(&Checkpoint) -> Result<()>,
) -> Result<()> {
    if train.labels() != ckpt.model.labels() || val.labels() != ckpt.model.labels() {
        return Err(CanError::config("training and validation splits must share the model's labels"));
    }
    let loss = ckpt.loss_config()?;
    let mut rng = ckpt.rng.restore()?;
    while !ckpt.is_done() && until_epoch.is_none_or(|u| ckpt.epoch < u) {
        let plan = EpochPlan {
            kind: ckpt.config.loss.kind,
            loss: &loss,
            batch_size: ckpt.config.batch_size,
            lr: ckpt.config.optimizer.lr,
            momentum: ckpt.config.optimizer.momentum,
            step_budget: ckpt.config.max_steps.map(|m| m.saturating_sub(ckpt.step)),
        };
        let result = train_epoch(
            &mut ckpt.model,
            &mut ckpt.velocity,
            train,
            &plan,
            &mut rng,
            &mut ckpt.step,
        )?;
        let val_auroc = evaluate(&ckpt.model, val)?.mean_auroc;
        ckpt.epoch += 1;
        match val_auroc {
            Some(a) if ckpt.best.as_ref().is_none_or(|b| a > b.val_mean_auroc) => {
                ckpt.best = Some(Best {
                    epoch: ckpt.epoch,
                    val_mean_auroc: a,
                    model: ckpt.model.clone(),
                });
                ckpt.epochs_since_best = 0;
            }
            _ => ckpt.epochs_since_best += 1,
        }
        ckpt.history.push(EpochLog {
            epoch: ckpt.epoch,
            steps: result.steps,
            mean_train_loss: result.mean_loss,
            val_mean_auroc: val_auroc,
        });
        if ckpt.config.patience.is_some_and(|p| ckpt.epochs_since_best >= p)
            || ckpt.config.max_steps.is_some_and(|m| ckpt.step >= m)
        {
            ckpt.finished = true;
        }
        ckpt.rng = RngState::capture(&rng);
        on_epoch(ckpt)?;
    }
    Ok(())
}

/// Train from scratch to completion.
pub fn train(config: &RunConfig, train_set: &Dataset, val_set: &Dataset) -> Result<Checkpoint> {
    let mut ckpt = init_checkpoint(config, train_set)?;
    run_epochs(&mut ckpt, train_set, val_set, None, |_| Ok(()))?;
    Ok(ckpt)
}
