//! Parameterised layers and the convolutional backbone.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CanError, Result};
use crate::graph::{Graph, Var};
use crate::kernels::window_extent;
use crate::tensor::Tensor;

fn uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

/// Kernel `(C_out, C_in, k, k)` plus per-output-channel bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub kernel: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl ConvLayer {
    pub fn new(kernel: Tensor, bias: Tensor, stride: usize, padding: usize) -> Result<Self> {
        match *kernel.shape() {
            [c_out, _, kh, kw] if kh == kw && bias.shape() == [c_out] => Ok(ConvLayer {
                kernel,
                bias,
                stride,
                padding,
            }),
            _ => Err(CanError::shape(format!(
                "conv kernel {:?} / bias {:?} are not (C_out, C_in, k, k) / (C_out)",
                kernel.shape(),
                bias.shape()
            ))),
        }
    }

    /// Fan-in scaled uniform kernel, zero bias.
    pub fn init<R: Rng + ?Sized>(
        rng: &mut R,
        c_in: usize,
        c_out: usize,
        k: usize,
        padding: usize,
        bound_scale: f64,
    ) -> Self {
        let fan_in = (c_in * k * k) as f64;
        ConvLayer {
            kernel: uniform(rng, &[c_out, c_in, k, k], (bound_scale / fan_in).sqrt()),
            bias: Tensor::zeros(&[c_out]),
            stride: 1,
            padding,
        }
    }

    pub fn c_in(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn c_out(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.shape()[2]
    }

    pub fn forward(&self, g: &mut Graph, input: Var, bound: &mut ParamBinder) -> Result<Var> {
        let k = bound.bind(g, &self.kernel);
        let b = bound.bind(g, &self.bias);
        g.conv2d(input, k, b, self.stride, self.padding)
    }

    pub fn out_extent(&self, size: usize) -> Result<usize> {
        window_extent(size, self.kernel_size(), self.stride, self.padding)
    }
}

/// Weight `(out_dim, in_dim)` and bias `(out_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl DenseLayer {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        match *weight.shape() {
            [out, _] if bias.shape() == [out] => Ok(DenseLayer { weight, bias }),
            _ => Err(CanError::shape(format!(
                "dense weight {:?} / bias {:?} are not (out, in) / (out)",
                weight.shape(),
                bias.shape()
            ))),
        }
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            weight: uniform(rng, &[out_dim, in_dim], (1.0 / in_dim as f64).sqrt()),
            bias: Tensor::zeros(&[out_dim]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, g: &mut Graph, input: Var, bound: &mut ParamBinder) -> Result<Var> {
        let w = bound.bind(g, &self.weight);
        let b = bound.bind(g, &self.bias);
        g.dense(input, w, b)
    }
}

/// Registers parameters on a graph as they are used and remembers their
/// handles in registration order, which is the model's canonical parameter
/// order.
#[derive(Debug, Default)]
pub struct ParamBinder {
    trainable: bool,
    vars: Vec<Var>,
}

impl ParamBinder {
    pub fn new(trainable: bool) -> Self {
        ParamBinder {
            trainable,
            vars: Vec::new(),
        }
    }

    pub fn bind(&mut self, g: &mut Graph, t: &Tensor) -> Var {
        let v = if self.trainable {
            g.param(t.clone())
        } else {
            g.constant(t.clone())
        };
        self.vars.push(v);
        v
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn into_vars(self) -> Vec<Var> {
        self.vars
    }
}

/// Shape of a convolutional backbone: one block per width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub widths: Vec<usize>,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
}

fn default_kernel() -> usize {
    3
}

impl BackboneSpec {
    pub fn new(widths: &[usize]) -> Self {
        BackboneSpec {
            widths: widths.to_vec(),
            kernel: default_kernel(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(CanError::config(format!(
                "backbone widths {:?} must be a non-empty list of positive channel counts",
                self.widths
            )));
        }
        if self.kernel % 2 == 0 {
            return Err(CanError::config("backbone kernel size must be odd"));
        }
        Ok(())
    }

    pub fn out_channels(&self) -> usize {
        *self.widths.last().expect("validated non-empty")
    }

    /// Spatial extent of the last block for an `h × w` input.
    pub fn out_extent(&self, hw: (usize, usize)) -> Result<(usize, usize)> {
        let mut cur = hw;
        for _ in &self.widths {
            cur = (window_extent(cur.0, 2, 2, 0)?, window_extent(cur.1, 2, 2, 0)?);
        }
        Ok(cur)
    }
}

/// A stack of conv blocks. Every block is conv → relu → 2×2 max-pool
/// except the last, which omits the relu so the caller receives raw
/// (pre-activation) feature maps. Max-pooling commutes with relu, so
/// `relu(raw)` equals what a fully activated last block would produce.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub blocks: Vec<ConvLayer>,
}

impl Backbone {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, in_channels: usize, spec: &BackboneSpec) -> Self {
        let mut c_in = in_channels;
        let blocks = spec
            .widths
            .iter()
            .map(|&c_out| {
                let layer = ConvLayer::init(rng, c_in, c_out, spec.kernel, spec.kernel / 2, 6.0);
                c_in = c_out;
                layer
            })
            .collect();
        Backbone { blocks }
    }

    pub fn out_channels(&self) -> usize {
        self.blocks.last().map(ConvLayer::c_out).unwrap_or(0)
    }

    pub fn forward(&self, g: &mut Graph, input: Var, bound: &mut ParamBinder) -> Result<Var> {
        let mut x = input;
        let last = self.blocks.len() - 1;
        for (i, block) in self.blocks.iter().enumerate() {
            x = block.forward(g, x, bound)?;
            if i != last {
                x = g.relu(x);
            }
            x = g.max_pool2d(x, 2, 2)?;
        }
        Ok(x)
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.blocks.iter().flat_map(|b| [&b.kernel, &b.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.blocks
            .iter_mut()
            .flat_map(|b| [&mut b.kernel, &mut b.bias])
            .collect()
    }
}
