//! Independent oracles shared by the integration tests: direct loops with
//! no im2col, GEMM or tap tables.
#![allow(dead_code)]

use can::graph::{Graph, Var};
use can::gradcheck::{finite_diff_grad, max_relative_error};
use can::{Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Values bounded away from zero, so relu-like kinks are never crossed by
/// a finite-difference probe.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m: f64 = rng.random_range(0.05..1.0);
        if rng.random::<bool>() { m } else { -m }
    })
}

pub fn naive_conv(x: &Tensor, k: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
    let [n, c, h, w] = x.shape().try_into().unwrap();
    let [o, _, kh, kw] = k.shape().try_into().unwrap();
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * o * ho * wo];
    for ni in 0..n {
        for oi in 0..o {
            for y in 0..ho {
                for xx in 0..wo {
                    let mut acc = b.data()[oi];
                    for ci in 0..c {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let iy = (y * stride + dy) as isize - pad as isize;
                                let ix = (xx * stride + dx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += x.data()[((ni * c + ci) * h + iy as usize) * w + ix as usize]
                                    * k.data()[((oi * c + ci) * kh + dy) * kw + dx];
                            }
                        }
                    }
                    out[((ni * o + oi) * ho + y) * wo + xx] = acc;
                }
            }
        }
    }
    Tensor::new(&[n, o, ho, wo], out).unwrap()
}

pub fn naive_pool(x: &Tensor, k: usize, stride: usize) -> Tensor {
    let [n, c, h, w] = x.shape().try_into().unwrap();
    let ho = (h - k) / stride + 1;
    let wo = (w - k) / stride + 1;
    let mut out = Vec::new();
    for p in 0..n * c {
        for y in 0..ho {
            for xx in 0..wo {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..k {
                    for dx in 0..k {
                        m = m.max(x.data()[(p * h + y * stride + dy) * w + xx * stride + dx]);
                    }
                }
                out.push(m);
            }
        }
    }
    Tensor::new(&[n, c, ho, wo], out).unwrap()
}

pub fn naive_dense(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let [n, d] = x.shape().try_into().unwrap();
    let [k, _] = w.shape().try_into().unwrap();
    Tensor::from_fn(&[n, k], |i| {
        let (r, j) = (i / k, i % k);
        b.data()[j] + (0..d).map(|t| x.data()[r * d + t] * w.data()[j * d + t]).sum::<f64>()
    })
}

/// Bilinear sample of one plane at fractional source position `(sy, sx)`.
fn bilinear(plane: &[f64], h: usize, w: usize, sy: f64, sx: f64) -> f64 {
    let y0 = sy.floor() as usize;
    let x0 = sx.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
    let at = |y: usize, x: usize| plane[y * w + x];
    at(y0, x0) * (1.0 - fy) * (1.0 - fx)
        + at(y0, x1) * (1.0 - fy) * fx
        + at(y1, x0) * fy * (1.0 - fx)
        + at(y1, x1) * fy * fx
}

/// Corner-aligned bilinear resize of the trailing two axes.
pub fn naive_resize_corners(x: &Tensor, to: (usize, usize)) -> Tensor {
    let s = x.shape();
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    let planes = x.len() / (h * w);
    let scale = |n: usize, m: usize| if m > 1 { (n - 1) as f64 / (m - 1) as f64 } else { 0.0 };
    let mut out = Vec::new();
    for p in 0..planes {
        let plane = &x.data()[p * h * w..(p + 1) * h * w];
        for i in 0..to.0 {
            for j in 0..to.1 {
                out.push(bilinear(plane, h, w, i as f64 * scale(h, to.0), j as f64 * scale(w, to.1)));
            }
        }
    }
    let mut shape = s.to_vec();
    let r = shape.len();
    shape[r - 2] = to.0;
    shape[r - 1] = to.1;
    Tensor::new(&shape, out).unwrap()
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counting
/// one half.
pub fn pairwise_auroc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0usize;
    for (i, &yi) in labels.iter().enumerate() {
        if yi == 0 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj != 0 {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_FLOOR: f64 = 1e-4;

/// Relative error between the tape gradient of `build(x)` contracted with a
/// fixed random projection and central differences of the same scalar.
pub fn grad_error(
    x: &Tensor,
    projection_seed: u64,
    build: impl Fn(&mut Graph, Var) -> Result<Var>,
) -> f64 {
    let scalar = |g: &mut Graph, out: Var| -> Result<Var> {
        let shape = g.shape(out).to_vec();
        let mut r = rng(projection_seed);
        let proj = g.constant(random_tensor(&mut r, &shape));
        let prod = g.mul(out, proj)?;
        Ok(g.sum(prod))
    };
    let mut g = Graph::new();
    let v = g.param(x.clone());
    let out = build(&mut g, v).unwrap();
    let loss = scalar(&mut g, out).unwrap();
    g.backward(loss).unwrap();
    let analytic = g.grad_or_zeros(v);
    let numeric = finite_diff_grad(
        |t| {
            let mut g = Graph::new();
            let v = g.constant(t.clone());
            let out = build(&mut g, v)?;
            let loss = scalar(&mut g, out)?;
            g.value(loss).item()
        },
        x,
        FD_STEP,
    )
    .unwrap();
    max_relative_error(&analytic, &numeric, FD_FLOOR)
}
