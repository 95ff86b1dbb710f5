//! Train briefly, then draw class activation maps for the rarest label and
//! check whether each peak lands inside the glyph's box.

use can::data::{generate, GenConfig};
use can::layers::BackboneSpec;
use can::localization::{export, localize_dataset};
use can::train::run::rarest_label;
use can::train::{train, OptimizerConfig, RunConfig};

fn main() -> can::Result<()> {
    let gen = |seed, n| generate(&GenConfig::new(seed, n, 36, &[0.5, 0.2, 0.1]));
    let (train_set, val, test) = (gen(21, 1200)?, gen(22, 200)?, gen(23, 200)?);
    let cfg = RunConfig {
        backbone_a: BackboneSpec::new(&[6, 12, 16]),
        backbone_b: Some(BackboneSpec::new(&[6, 12, 24])),
        crop: 32,
        epochs: 3,
        optimizer: OptimizerConfig { lr: 0.1, momentum: 0.9 },
        ..RunConfig::default()
    };
    let ckpt = train(&cfg, &train_set, &val)?;
    let model = ckpt.selected_model();

    let label = rarest_label(&train_set).expect("every label has positives");
    let maps = localize_dataset(model, &test, label, |_, s| s.labels[label] != 0)?;
    for (_, r) in maps.iter().take(8) {
        println!(
            "image {:>3}: p {:.3}, peak {:?}, box {:?}, hit {:?}",
            r.image_id, r.probability, r.argmax, r.bbox, r.hit
        );
    }
    let hits = maps.iter().filter(|(_, r)| r.hit == Some(true)).count();
    println!("{hits}/{} peaks inside the box for {:?}", maps.len(), test.label_names()[label]);

    let dir = std::env::temp_dir().join("can-example-heatmaps");
    export(&dir, &maps)?;
    println!("heat maps written to {}", dir.display());
    Ok(())
}
