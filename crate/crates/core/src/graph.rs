//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation in execution order, so node ids are
//! already a topological order and [`Graph::backward`] is a single reverse
//! sweep. Gradients accumulate additively when a node fans out.

use rand::Rng;

use crate::error::{CanError, Result};
use crate::kernels::{self, Alignment, ConvGeometry, PoolGeometry};
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Per-element weights and focusing exponent of the balance loss.
#[derive(Debug, Clone)]
pub(crate) struct BalanceTerms {
    pub w_pos: Vec<f64>,
    pub w_neg: Vec<f64>,
    pub gamma: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d { input: Var, kernel: Var, bias: Var, geom: ConvGeometry },
    Relu(Var),
    MaxPool { input: Var, argmax: Vec<usize> },
    GlobalAvgPool(Var),
    Dense { input: Var, weight: Var, bias: Var },
    Sigmoid(Var),
    Dropout { input: Var, mask: Vec<f64> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Maximum(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    ChannelSum(Var),
    Resize { input: Var, src: (usize, usize), dst: (usize, usize), align: Alignment },
    MaxNormalize { input: Var, pivots: Vec<Option<usize>> },
    SampleNorm(Var),
    Mean(Var),
    Sum(Var),
    Bce { probs: Var, labels: Tensor, epsilon: f64 },
    Balance { probs: Var, labels: Tensor, terms: BalanceTerms },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    op: Op,
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(CanError::shape(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn rank4(op: &str, t: &Tensor) -> Result<[usize; 4]> {
    match *t.shape() {
        [n, c, h, w] => Ok([n, c, h, w]),
        ref s => Err(CanError::shape(format!("{op} expects a rank-4 tensor, got {s:?}"))),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// A trainable leaf: its gradient is populated by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad: true,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad: false,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass with respect to `v`, if any flowed.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Gradient with respect to `v`, zeros when nothing reached it.
    pub fn grad_or_zeros(&self, v: Var) -> Tensor {
        self.grad(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(self.shape(v)))
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let geom = ConvGeometry::new(
            self.shape(input),
            self.shape(kernel),
            self.shape(bias),
            stride,
            padding,
        )?;
        let out = kernels::conv2d_forward(
            &geom,
            self.value(input).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
        );
        let value = Tensor::new(&geom.output_shape(), out)?;
        Ok(self.push(value, Op::Conv2d { input, kernel, bias, geom }, &[input, kernel, bias]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu(x), &[x])
    }

    pub fn max_pool2d(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        let geom = PoolGeometry::new(self.shape(x), kernel, stride)?;
        let (out, argmax) = kernels::max_pool_forward(&geom, self.value(x).data());
        let value = Tensor::new(&geom.output_shape(), out)?;
        Ok(self.push(value, Op::MaxPool { input: x, argmax }, &[x]))
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = rank4("global_avg_pool", self.value(x))?;
        let area = (h * w) as f64;
        let out = self
            .value(x)
            .data()
            .chunks(h * w)
            .map(|plane| plane.iter().sum::<f64>() / area)
            .collect();
        let value = Tensor::new(&[n, c], out)?;
        Ok(self.push(value, Op::GlobalAvgPool(x), &[x]))
    }

    /// `x·Wᵀ + b` for `x: [N, D]`, `W: [K, D]`, `b: [K]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        let (n, d) = match *x.shape() {
            [n, d] => (n, d),
            ref s => return Err(CanError::shape(format!("dense expects [N, D] input, got {s:?}"))),
        };
        let k = match *w.shape() {
            [k, wd] if wd == d => k,
            ref s => {
                return Err(CanError::shape(format!(
                    "dense weight {s:?} does not accept input width {d}"
                )))
            }
        };
        if b.shape() != [k] {
            return Err(CanError::shape(format!(
                "dense bias {:?} does not match {k} outputs",
                b.shape()
            )));
        }
        let mut out: Vec<f64> = (0..n).flat_map(|_| b.data().iter().copied()).collect();
        kernels::gemm(n, d, k, x.data(), false, w.data(), true, 1.0, &mut out);
        let value = Tensor::new(&[n, k], out)?;
        Ok(self.push(value, Op::Dense { input, weight, bias }, &[input, weight, bias]))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        self.push(value, Op::Sigmoid(x), &[x])
    }

    /// Inverted dropout: survivors are scaled by `1/(1 − rate)`; identity
    /// outside training.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(CanError::config(format!("dropout rate {rate} must lie in [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let src = self.value(x);
        let out = src.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(src.shape(), out)?;
        Ok(self.push(value, Op::Dropout { input: x, mask }, &[x]))
    }

    fn zip_with(&self, op: &str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(op, ta, tb)?;
        let out = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape(), out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with("add", a, b, |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with("sub", a, b, |x, y| x - y)?;
        Ok(self.push(value, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise (hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with("mul", a, b, |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    /// Elementwise maximum; ties send the gradient to `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with("maximum", a, b, |x, y| if y > x { y } else { x })?;
        Ok(self.push(value, Op::Maximum(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        self.push(value, Op::Scale(x, factor), &[x])
    }

    /// Concatenate `[N, C_i, H, W]` tensors along the channel axis, in order.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| CanError::shape("concat of zero tensors"))?;
        let [n, _, h, w] = rank4("concat_channels", self.value(first))?;
        let mut channels = 0;
        for &p in parts {
            let [pn, pc, ph, pw] = rank4("concat_channels", self.value(p))?;
            if (pn, ph, pw) != (n, h, w) {
                return Err(CanError::shape(format!(
                    "concat_channels: {:?} does not align with {:?}",
                    self.shape(p),
                    self.shape(first)
                )));
            }
            channels += pc;
        }
        let mut out = Vec::with_capacity(n * channels * h * w);
        for i in 0..n {
            for &p in parts {
                let t = self.value(p);
                let sz = t.shape()[1] * h * w;
                out.extend_from_slice(&t.data()[i * sz..(i + 1) * sz]);
            }
        }
        let value = Tensor::new(&[n, channels, h, w], out)?;
        Ok(self.push(value, Op::Concat(parts.to_vec()), parts))
    }

    /// `[N, C, H, W] → [N, 1, H, W]`.
    pub fn channel_sum(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = rank4("channel_sum", self.value(x))?;
        let src = self.value(x).data();
        let mut out = vec![0.0; n * h * w];
        for i in 0..n {
            let dst = &mut out[i * h * w..(i + 1) * h * w];
            for ch in 0..c {
                let plane = &src[(i * c + ch) * h * w..(i * c + ch + 1) * h * w];
                for (d, s) in dst.iter_mut().zip(plane) {
                    *d += s;
                }
            }
        }
        let value = Tensor::new(&[n, 1, h, w], out)?;
        Ok(self.push(value, Op::ChannelSum(x), &[x]))
    }

    pub fn resize_bilinear(&mut self, x: Var, target: (usize, usize), align: Alignment) -> Result<Var> {
        let [n, c, h, w] = rank4("resize_bilinear", self.value(x))?;
        if target.0 == 0 || target.1 == 0 {
            return Err(CanError::config("resize target must be non-empty"));
        }
        let out = kernels::resize_forward(self.value(x).data(), n * c, (h, w), target, align);
        let value = Tensor::new(&[n, c, target.0, target.1], out)?;
        let op = Op::Resize {
            input: x,
            src: (h, w),
            dst: target,
            align,
        };
        Ok(self.push(value, op, &[x]))
    }

    /// Divide each sample (leading-axis slice) by its maximum. Samples whose
    /// maximum is not positive are passed through unchanged. The maximum is
    /// treated as a selection of its first occurrence.
    pub fn max_normalize(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let n = src.shape()[0];
        let per = src.len() / n;
        let mut out = Vec::with_capacity(src.len());
        let mut pivots = Vec::with_capacity(n);
        for sample in src.data().chunks(per) {
            let mut best = 0;
            for (i, &v) in sample.iter().enumerate() {
                if v > sample[best] {
                    best = i;
                }
            }
            let m = sample[best];
            if m > 0.0 {
                out.extend(sample.iter().map(|v| v / m));
                pivots.push(Some(best));
            } else {
                out.extend_from_slice(sample);
                pivots.push(None);
            }
        }
        let value = Tensor::new(src.shape(), out).expect("shape preserved");
        self.push(value, Op::MaxNormalize { input: x, pivots }, &[x])
    }

    /// Euclidean norm of each leading-axis slice: `[N, ...] → [N]`.
    pub fn sample_norm(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let n = src.shape()[0];
        let per = src.len() / n;
        let out = src
            .data()
            .chunks(per)
            .map(|s| s.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let value = Tensor::new(&[n], out).expect("n > 0");
        self.push(value, Op::SampleNorm(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(value, Op::Mean(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x), &[x])
    }

    fn check_labels(&self, probs: Var, labels: &Tensor) -> Result<(usize, usize)> {
        match *self.shape(probs) {
            [n, l] if labels.shape() == [n, l] => Ok((n, l)),
            ref s => Err(CanError::shape(format!(
                "probabilities {s:?} and labels {:?} must both be [N, L]",
                labels.shape()
            ))),
        }
    }

    /// Binary cross entropy, summed over labels and averaged over the batch.
    pub fn bce(&mut self, probs: Var, labels: &Tensor, epsilon: f64) -> Result<Var> {
        let (n, _) = self.check_labels(probs, labels)?;
        let p = self.value(probs).data();
        let total: f64 = p
            .iter()
            .zip(labels.data())
            .map(|(&p, &y)| -(y * p.max(epsilon).ln() + (1.0 - y) * (1.0 - p).max(epsilon).ln()))
            .sum();
        let value = Tensor::scalar(total / n as f64);
        let op = Op::Bce {
            probs,
            labels: labels.clone(),
            epsilon,
        };
        Ok(self.push(value, op, &[probs]))
    }

    /// Class-weighted focal-style loss; `w_pos`/`w_neg` are indexed by label.
    pub(crate) fn balance(&mut self, probs: Var, labels: &Tensor, terms: BalanceTerms) -> Result<Var> {
        let (n, l) = self.check_labels(probs, labels)?;
        if terms.w_pos.len() != l || terms.w_neg.len() != l {
            return Err(CanError::shape(format!(
                "balance weights cover {} labels, predictions have {l}",
                terms.w_pos.len()
            )));
        }
        let p = self.value(probs).data();
        let mut total = 0.0;
        for (i, (&p, &y)) in p.iter().zip(labels.data()).enumerate() {
            total += balance_term(p, y, terms.w_pos[i % l], terms.w_neg[i % l], &terms);
        }
        let value = Tensor::scalar(total / n as f64);
        let op = Op::Balance {
            probs,
            labels: labels.clone(),
            terms,
        };
        Ok(self.push(value, op, &[probs]))
    }

    /// Populate gradients of `loss` with respect to every node that requires
    /// them. Previous gradients are cleared first.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(CanError::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let seed_shape = self.shape(loss).to_vec();
        self.nodes[loss.0].grad = Some(Tensor::ones(&seed_shape));
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(grad) = self.nodes[id].grad.take() else {
                continue;
            };
            let contributions = self.local_grads(id, &grad);
            self.nodes[id].grad = Some(grad);
            for (var, g) in contributions {
                self.accumulate(var, g);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Vec<f64>) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(existing) => {
                for (e, x) in existing.data_mut().iter_mut().zip(g) {
                    *e += x;
                }
            }
            None => {
                node.grad = Some(Tensor::new(node.value.shape(), g).expect("gradient shape matches value"))
            }
        }
    }

    fn local_grads(&self, id: usize, grad: &Tensor) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[id];
        let go = grad.data();
        let val = |v: Var| self.nodes[v.0].value.data();
        let elementwise = |f: &dyn Fn(usize, f64) -> f64| -> Vec<f64> {
            go.iter().enumerate().map(|(i, &g)| f(i, g)).collect()
        };
        match &node.op {
            Op::Leaf => vec![],
            Op::Conv2d { input, kernel, bias, geom } => {
                let g = kernels::conv2d_backward(geom, val(*input), val(*kernel), go);
                vec![(*input, g.input), (*kernel, g.kernel), (*bias, g.bias)]
            }
            Op::Relu(x) => {
                let xs = val(*x);
                vec![(*x, elementwise(&|i, g| if xs[i] > 0.0 { g } else { 0.0 }))]
            }
            Op::MaxPool { input, argmax } => {
                let mut d = vec![0.0; self.nodes[input.0].value.len()];
                for (&src, &g) in argmax.iter().zip(go) {
                    d[src] += g;
                }
                vec![(*input, d)]
            }
            Op::GlobalAvgPool(x) => {
                let shape = self.nodes[x.0].value.shape();
                let area = shape[2] * shape[3];
                let d = go
                    .iter()
                    .flat_map(|&g| std::iter::repeat(g / area as f64).take(area))
                    .collect();
                vec![(*x, d)]
            }
            Op::Dense { input, weight, bias } => {
                let xs = &self.nodes[input.0].value;
                let (n, d) = (xs.shape()[0], xs.shape()[1]);
                let k = go.len() / n;
                let mut dx = vec![0.0; n * d];
                kernels::gemm(n, k, d, go, false, val(*weight), false, 0.0, &mut dx);
                let mut dw = vec![0.0; k * d];
                kernels::gemm(k, n, d, go, true, xs.data(), false, 0.0, &mut dw);
                let mut db = vec![0.0; k];
                for row in go.chunks(k) {
                    for (b, g) in db.iter_mut().zip(row) {
                        *b += g;
                    }
                }
                vec![(*input, dx), (*weight, dw), (*bias, db)]
            }
            Op::Sigmoid(x) => {
                let ys = node.value.data();
                vec![(*x, elementwise(&|i, g| g * ys[i] * (1.0 - ys[i])))]
            }
            Op::Dropout { input, mask } => {
                vec![(*input, elementwise(&|i, g| g * mask[i]))]
            }
            Op::Add(a, b) => vec![(*a, go.to_vec()), (*b, go.to_vec())],
            Op::Sub(a, b) => vec![(*a, go.to_vec()), (*b, go.iter().map(|g| -g).collect())],
            Op::Mul(a, b) => {
                let (xa, xb) = (val(*a), val(*b));
                vec![
                    (*a, elementwise(&|i, g| g * xb[i])),
                    (*b, elementwise(&|i, g| g * xa[i])),
                ]
            }
            Op::Maximum(a, b) => {
                let (xa, xb) = (val(*a), val(*b));
                vec![
                    (*a, elementwise(&|i, g| if xb[i] > xa[i] { 0.0 } else { g })),
                    (*b, elementwise(&|i, g| if xb[i] > xa[i] { g } else { 0.0 })),
                ]
            }
            Op::Scale(x, f) => vec![(*x, go.iter().map(|g| g * f).collect())],
            Op::Concat(parts) => {
                let shape = node.value.shape();
                let (n, hw) = (shape[0], shape[2] * shape[3]);
                let total_c = shape[1];
                let mut offset = 0;
                let mut out = Vec::with_capacity(parts.len());
                for &p in parts {
                    let c = self.nodes[p.0].value.shape()[1];
                    let mut d = Vec::with_capacity(n * c * hw);
                    for i in 0..n {
                        let start = (i * total_c + offset) * hw;
                        d.extend_from_slice(&go[start..start + c * hw]);
                    }
                    offset += c;
                    out.push((p, d));
                }
                out
            }
            Op::ChannelSum(x) => {
                let shape = self.nodes[x.0].value.shape();
                let (n, c, hw) = (shape[0], shape[1], shape[2] * shape[3]);
                let mut d = Vec::with_capacity(n * c * hw);
                for i in 0..n {
                    for _ in 0..c {
                        d.extend_from_slice(&go[i * hw..(i + 1) * hw]);
                    }
                }
                vec![(*x, d)]
            }
            Op::Resize { input, src, dst, align } => {
                let shape = self.nodes[input.0].value.shape();
                let planes = shape[0] * shape[1];
                vec![(*input, kernels::resize_backward(go, planes, *src, *dst, *align))]
            }
            Op::MaxNormalize { input, pivots } => {
                let xs = val(*input);
                let per = xs.len() / pivots.len();
                let mut d = go.to_vec();
                for (s, pivot) in pivots.iter().enumerate() {
                    let Some(k) = *pivot else { continue };
                    let base = s * per;
                    let m = xs[base + k];
                    // y_i = x_i / m with m = x_k
                    let mut dm = 0.0;
                    for i in 0..per {
                        d[base + i] = go[base + i] / m;
                        dm -= go[base + i] * xs[base + i] / (m * m);
                    }
                    d[base + k] += dm;
                }
                vec![(*input, d)]
            }
            Op::SampleNorm(x) => {
                let xs = val(*x);
                let norms = node.value.data();
                let per = xs.len() / norms.len();
                let d = xs
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let s = i / per;
                        if norms[s] > 0.0 {
                            go[s] * v / norms[s]
                        } else {
                            0.0
                        }
                    })
                    .collect();
                vec![(*x, d)]
            }
            Op::Mean(x) => {
                let len = self.nodes[x.0].value.len();
                vec![(*x, vec![go[0] / len as f64; len])]
            }
            Op::Sum(x) => {
                let len = self.nodes[x.0].value.len();
                vec![(*x, vec![go[0]; len])]
            }
            Op::Bce { probs, labels, epsilon } => {
                let ps = val(*probs);
                let n = self.nodes[probs.0].value.shape()[0] as f64;
                let d = ps
                    .iter()
                    .zip(labels.data())
                    .map(|(&p, &y)| {
                        let dp_pos = if p > *epsilon { -y / p } else { 0.0 };
                        let dp_neg = if 1.0 - p > *epsilon { (1.0 - y) / (1.0 - p) } else { 0.0 };
                        go[0] * (dp_pos + dp_neg) / n
                    })
                    .collect();
                vec![(*probs, d)]
            }
            Op::Balance { probs, labels, terms } => {
                let ps = val(*probs);
                let l = terms.w_pos.len();
                let n = self.nodes[probs.0].value.shape()[0] as f64;
                let d = ps
                    .iter()
                    .zip(labels.data())
                    .enumerate()
                    .map(|(i, (&p, &y))| {
                        go[0] * balance_term_grad(p, y, terms.w_pos[i % l], terms.w_neg[i % l], terms) / n
                    })
                    .collect();
                vec![(*probs, d)]
            }
        }
    }
}

/// `−w₊(1−p)^γ·y·ln p − w₋·p^γ·(1−y)·ln(1−p)` with clamped logarithms.
pub(crate) fn balance_term(p: f64, y: f64, w_pos: f64, w_neg: f64, terms: &BalanceTerms) -> f64 {
    let q = 1.0 - p;
    let eps = terms.epsilon;
    -w_pos * q.powf(terms.gamma) * y * p.max(eps).ln()
        - w_neg * p.powf(terms.gamma) * (1.0 - y) * q.max(eps).ln()
}

fn balance_term_grad(p: f64, y: f64, w_pos: f64, w_neg: f64, terms: &BalanceTerms) -> f64 {
    let (q, gamma, eps) = (1.0 - p, terms.gamma, terms.epsilon);
    // d/dp of the modulating factors; zero at the boundary where the
    // factor itself vanishes
    let dq_factor = if gamma == 0.0 || q <= 0.0 { 0.0 } else { -gamma * q.powf(gamma - 1.0) };
    let dp_factor = if gamma == 0.0 || p <= 0.0 { 0.0 } else { gamma * p.powf(gamma - 1.0) };
    let dlog_p = if p > eps { 1.0 / p } else { 0.0 };
    let dlog_q = if q > eps { -1.0 / q } else { 0.0 };
    let pos = -w_pos * y * (dq_factor * p.max(eps).ln() + q.powf(gamma) * dlog_p);
    let neg = -w_neg * (1.0 - y) * (dp_factor * q.max(eps).ln() + p.powf(gamma) * dlog_q);
    pos + neg
}
