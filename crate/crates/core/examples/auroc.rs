//! Per-label AUROC, including ties and a label with no positives.

use can::metrics::{auroc, EvalReport};

fn main() -> can::Result<()> {
    let scores = [0.9, 0.8, 0.7, 0.7, 0.4, 0.3, 0.2, 0.1];
    let labels = [1, 1, 0, 1, 0, 0, 1, 0];
    println!("auroc {:?}", auroc(&scores, &labels)?);
    println!("perfect {:?}", auroc(&[0.9, 0.1], &[1, 0])?);
    println!("all ties {:?}", auroc(&[0.5; 4], &[1, 0, 1, 0])?);
    println!("one class only {:?}", auroc(&[0.2, 0.4], &[0, 0])?);

    let names = vec!["common".to_string(), "rare".to_string(), "absent".to_string()];
    let scores = vec![
        vec![0.9, 0.8, 0.3, 0.2, 0.6, 0.1],
        vec![0.2, 0.9, 0.1, 0.3, 0.4, 0.2],
        vec![0.1; 6],
    ];
    let truth = vec![vec![1, 1, 0, 0, 1, 0], vec![0, 1, 0, 0, 0, 0], vec![0; 6]];
    let report = EvalReport::from_scores(&names, &scores, &truth)?;
    print!("{}", report.to_table("AUROC"));
    println!("undefined: {:?}", report.undefined_labels());
    Ok(())
}
