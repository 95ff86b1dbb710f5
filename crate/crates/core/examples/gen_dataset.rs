//! Generate a small imbalanced glyph dataset, write it to disk, read it back
//! and split it by group.

use can::data::{generate, split, Dataset, GenConfig};

fn main() -> can::Result<()> {
    let mut cfg = GenConfig::new(7, 600, 48, &[0.5, 0.1, 0.02]);
    cfg.distractors = 2;
    let dataset = generate(&cfg)?;
    println!("labels {:?}", dataset.label_names());
    println!("positives {:?} of {}", dataset.pos_counts(), dataset.len());

    let dir = std::env::temp_dir().join("can-example-gen");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("glyphs.bin");
    dataset.save(&path)?;
    let back = Dataset::load(&path)?;
    assert_eq!(back, dataset);
    println!("round trip ok: {}", path.display());

    let (train, val, test) = split(&dataset, (0.8, 0.1, 0.1), 0)?;
    println!("split {} / {} / {}", train.len(), val.len(), test.len());

    // a crude look at the first image
    let img = &dataset.samples()[0];
    println!("sample 0 labels {:?}", img.labels);
    for row in img.image.data().chunks(48).step_by(3) {
        let line: String = row
            .iter()
            .step_by(2)
            .map(|&v| match v {
                v if v > 0.75 => '#',
                v if v > 0.45 => '+',
                _ => ' ',
            })
            .collect();
        println!("|{line}|");
    }
    Ok(())
}
