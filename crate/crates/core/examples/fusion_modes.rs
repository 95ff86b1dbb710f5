//! Build the single-backbone baseline and the dual model under each fusion
//! mode, and compare parameter counts and outputs on the same batch.

use can::data::{generate, GenConfig, Window};
use can::layers::BackboneSpec;
use can::{CanModel, FusionMode, InitSeeds, ModelConfig};

fn main() -> can::Result<()> {
    let data = generate(&GenConfig::new(1, 4, 32, &[0.5, 0.2]))?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let images = data.image_batch(&idx, &vec![Window::center((32, 32), 32); idx.len()])?;

    let config = |backbone_b: Option<BackboneSpec>, fusion, concat_all| ModelConfig {
        backbone_a: BackboneSpec::new(&[8, 16, 24]),
        backbone_b,
        labels: 2,
        fusion,
        concat_all,
        dropout: 0.0,
        input_hw: [32, 32],
        in_channels: 1,
    };
    let b = Some(BackboneSpec::new(&[8, 16, 32]));
    let cases = [
        ("single", config(None, FusionMode::Hadamard, false)),
        ("hadamard", config(b.clone(), FusionMode::Hadamard, false)),
        ("hadamard + concat", config(b.clone(), FusionMode::Hadamard, true)),
        ("add + concat", config(b.clone(), FusionMode::Add, true)),
        ("max + concat", config(b, FusionMode::Max, true)),
    ];
    for (name, cfg) in cases {
        let model = CanModel::init(cfg, InitSeeds::derive(0))?;
        let probs = model.predict(&images)?;
        println!(
            "{name:<18} {:>6} params, classifier input {:>3}, first probs {:.4?}",
            model.num_parameters(),
            model.config.classifier_in(),
            &probs.data()[..2]
        );
    }
    Ok(())
}
