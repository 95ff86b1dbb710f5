//! Compare tape gradients with central finite differences on a small
//! conv -> relu -> pool -> gap -> dense -> sigmoid -> bce chain.

use can::gradcheck::{finite_diff_grad, max_relative_error};
use can::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Records the chain with `kernel` as the only parameter.
fn build(x: &Tensor, kernel: &Tensor, w: &Tensor, y: &Tensor) -> can::Result<(Graph, Var, Var)> {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let kv = g.param(kernel.clone());
    let kb = g.constant(Tensor::zeros(&[kernel.shape()[0]]));
    let c = g.conv2d(xv, kv, kb, 1, 1)?;
    let r = g.relu(c);
    let p = g.max_pool2d(r, 2, 2)?;
    let pooled = g.global_avg_pool(p)?;
    let wv = g.constant(w.clone());
    let wb = g.constant(Tensor::zeros(&[w.shape()[0]]));
    let logits = g.dense(pooled, wv, wb)?;
    let probs = g.sigmoid(logits);
    let loss = g.bce(probs, y, 1e-12)?;
    Ok((g, kv, loss))
}

fn main() -> can::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&mut rng, &[2, 1, 6, 6]);
    let kernel = random(&mut rng, &[3, 1, 3, 3]);
    let w = random(&mut rng, &[2, 3]);
    let y = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0])?;

    let (mut g, kv, loss) = build(&x, &kernel, &w, &y)?;
    println!("loss {:.6}", g.value(loss).data()[0]);
    g.backward(loss)?;
    let analytic = g.grad_or_zeros(kv);

    let numeric = finite_diff_grad(
        |k| {
            let (g, _, loss) = build(&x, k, &w, &y)?;
            Ok(g.value(loss).data()[0])
        },
        &kernel,
        1e-5,
    )?;
    for (a, n) in analytic.data().iter().zip(numeric.data()).take(6) {
        println!("  tape {a:+.8}  finite diff {n:+.8}");
    }
    let err = max_relative_error(&analytic, &numeric, 1e-4);
    println!("max relative error over {} kernel entries: {err:.2e}", kernel.len());
    Ok(())
}
