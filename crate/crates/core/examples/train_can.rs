//! Train a small cross-attention model on generated data and report test
//! AUROC per label. Pass `--epochs N` to train longer.

use can::data::{generate, split, GenConfig};
use can::layers::BackboneSpec;
use can::metrics::evaluate;
use can::train::{train, OptimizerConfig, RunConfig};

fn main() -> can::Result<()> {
    let epochs = std::env::args()
        .skip_while(|a| a != "--epochs")
        .nth(1)
        .and_then(|v| v.parse().ok())
        .unwrap_or(3);
    let all = generate(&GenConfig::new(11, 1500, 36, &[0.5, 0.15, 0.05]))?;
    let (train_set, val, test) = split(&all, (0.7, 0.15, 0.15), 0)?;
    println!("train positives {:?} of {}", train_set.pos_counts(), train_set.len());

    let cfg = RunConfig {
        backbone_a: BackboneSpec::new(&[6, 12, 16]),
        backbone_b: Some(BackboneSpec::new(&[6, 12, 24])),
        crop: 32,
        epochs,
        optimizer: OptimizerConfig { lr: 0.1, momentum: 0.9 },
        ..RunConfig::default()
    };
    let ckpt = train(&cfg, &train_set, &val)?;
    for e in &ckpt.history {
        println!(
            "epoch {:>2}: train loss {:.5}, val mean AUROC {:.4}",
            e.epoch,
            e.mean_train_loss,
            e.val_mean_auroc.unwrap_or(f64::NAN)
        );
    }
    let report = evaluate(ckpt.selected_model(), &test)?;
    print!("{}", report.to_table("test AUROC"));
    Ok(())
}
