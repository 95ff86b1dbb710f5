//! Balance loss against plain cross entropy on an imbalanced batch, and the
//! attention loss between two feature stacks.

use can::losses::{attention_loss, balance_loss, balance_weights, bce_loss, LossConfig};
use can::{Graph, Tensor};

fn main() -> can::Result<()> {
    // 10 samples, label 0 common, label 1 rare
    let labels = Tensor::new(
        &[10, 2],
        vec![1., 0., 1., 0., 0., 0., 1., 1., 0., 0., 1., 0., 0., 0., 1., 0., 0., 0., 0., 0.],
    )?;
    let (pos, neg) = ([5, 1], [5, 9]);
    let (w_pos, w_neg) = balance_weights(&pos, &neg)?;
    println!("w+ {w_pos:.2?}  w- {w_neg:.2?}");

    // a model that misses the rare positive entirely
    let probs: Vec<f64> = labels
        .data()
        .chunks(2)
        .flat_map(|y| [if y[0] > 0.5 { 0.8 } else { 0.2 }, 0.1])
        .collect();
    let probs = Tensor::new(&[10, 2], probs)?;

    for gamma in [0.0, 1.0, 2.0] {
        let cfg = LossConfig::new(gamma, 0.0, w_pos.clone(), w_neg.clone())?;
        let mut g = Graph::new();
        let p = g.param(probs.clone());
        let bal = balance_loss(&mut g, p, &labels, &cfg)?;
        g.backward(bal)?;
        let grad = g.grad_or_zeros(p);
        println!(
            "gamma {gamma}: balance loss {:.4}, gradient on the missed rare positive {:+.4}",
            g.value(bal).data()[0],
            grad.data()[7]
        );
    }
    let mut g = Graph::new();
    let p = g.param(probs.clone());
    let bce = bce_loss(&mut g, p, &labels)?;
    g.backward(bce)?;
    println!(
        "bce: loss {:.4}, gradient on the missed rare positive {:+.4}",
        g.value(bce).data()[0],
        g.grad_or_zeros(p).data()[7]
    );

    // attention loss: identical maps give zero, shifted maps do not
    let mut a = Tensor::zeros(&[1, 2, 4, 4]);
    a.data_mut()[5] = 1.0;
    let mut b = Tensor::zeros(&[1, 3, 4, 4]);
    b.data_mut()[16 + 5] = 2.0;
    let mut shifted = Tensor::zeros(&[1, 3, 4, 4]);
    shifted.data_mut()[10] = 1.0;
    for (name, other) in [("same peak", b), ("moved peak", shifted)] {
        let mut g = Graph::new();
        let (fa, fb) = (g.constant(a.clone()), g.constant(other));
        let att = attention_loss(&mut g, fa, fb)?;
        println!("attention loss, {name}: {:.4}", g.value(att).data()[0]);
    }
    Ok(())
}
