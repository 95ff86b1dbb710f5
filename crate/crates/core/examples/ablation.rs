//! A miniature ablation: three variants over two seeds on a small dataset.

use can::data::{generate, GenConfig};
use can::layers::BackboneSpec;
use can::train::{ablate, AblationConfig, OptimizerConfig, RunConfig, Variant};

fn main() -> can::Result<()> {
    let gen = |seed, n| generate(&GenConfig::new(seed, n, 36, &[0.5, 0.1]));
    let (train_set, val, test) = (gen(31, 800)?, gen(32, 150)?, gen(33, 150)?);
    let grid = AblationConfig {
        base: RunConfig {
            backbone_a: BackboneSpec::new(&[4, 8, 12]),
            backbone_b: Some(BackboneSpec::new(&[4, 8, 16])),
            crop: 32,
            epochs: 2,
            optimizer: OptimizerConfig { lr: 0.1, momentum: 0.9 },
            ..RunConfig::default()
        },
        variants: vec![Variant::single_bce(), Variant::single_bal(), Variant::full_can()],
        seeds: vec![0, 1],
    };
    let report = ablate(&grid, &train_set, &val, &test, |v, seed, r| {
        eprintln!("{} seed {seed}: {:.4}", v.name, r.mean_auroc.unwrap_or(f64::NAN));
    })?;
    print!("{}", report.to_table());
    Ok(())
}
