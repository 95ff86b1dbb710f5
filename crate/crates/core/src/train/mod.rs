//! Training loop, warmup, checkpoints and the ablation harness.

pub mod ablation;
pub mod checkpoint;
pub mod config;
pub mod optim;
pub mod run;
pub mod trainer;

pub use ablation::{ablate, AblationConfig, AblationReport, AblationRow, Variant};
pub use checkpoint::{load_model, save_model, Checkpoint};
pub use config::{DataSpec, LossKind, LossSpec, OptimizerConfig, RunConfig, Splits, WeightSpec};
pub use optim::sgd_step;
pub use trainer::{dataset_loss, init_checkpoint, run_epochs, train, warmup, Warmup};
