//! Cross-attention networks for imbalanced multi-label image classification,
//! with a small reverse-mode autodiff engine, a synthetic glyph dataset and
//! class-activation-map localization.

mod codec;
pub mod cross_attention;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod layers;
pub mod localization;
pub mod losses;
pub mod metrics;
pub mod tensor;
pub mod train;

pub use cross_attention::{CanModel, FusionMode, InitSeeds, ModelConfig};
pub use data::{Dataset, GenConfig, Sample};
pub use error::{CanError, Result};
pub use graph::{Graph, Var};
pub use losses::LossConfig;
pub use metrics::EvalReport;
pub use tensor::Tensor;
