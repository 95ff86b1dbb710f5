//! Raw compute kernels over row-major `f64` buffers.
//!
//! These know nothing about the autodiff graph; [`crate::graph`] wires their
//! forward and backward halves together. Convolution lowers to GEMM through
//! im2col.

use crate::error::{CanError, Result};

/// `c = a·b + beta·c` with optional transposition of either operand.
/// `a` is `m×k` (or `k×m` when `trans_a`), `b` is `k×n` (or `n×k`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserted lengths together with the strides above keep every
    // access inside the three slices; `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Output extent of a sliding window, or a configuration error when the
/// window arithmetic does not divide evenly.
pub fn window_extent(size: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 {
        return Err(CanError::config("stride must be at least 1"));
    }
    let padded = size + 2 * padding;
    if kernel == 0 || padded < kernel {
        return Err(CanError::config(format!(
            "window {kernel} does not fit extent {size} with padding {padding}"
        )));
    }
    if (padded - kernel) % stride != 0 {
        return Err(CanError::config(format!(
            "extent {size} with kernel {kernel}, stride {stride}, padding {padding} gives a non-integral output"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub c_in: usize,
    pub height: usize,
    pub width: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        input: &[usize],
        kernel: &[usize],
        bias: &[usize],
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if input.len() != 4 || kernel.len() != 4 {
            return Err(CanError::shape(format!(
                "conv2d expects rank-4 input and kernel, got {input:?} and {kernel:?}"
            )));
        }
        let (batch, c_in, height, width) = (input[0], input[1], input[2], input[3]);
        let (c_out, k_in, kh, kw) = (kernel[0], kernel[1], kernel[2], kernel[3]);
        if k_in != c_in {
            return Err(CanError::shape(format!(
                "conv2d input has {c_in} channels but kernel expects {k_in}"
            )));
        }
        if kh != kw {
            return Err(CanError::shape(format!("conv2d kernel must be square, got {kh}x{kw}")));
        }
        if bias != [c_out] {
            return Err(CanError::shape(format!(
                "conv2d bias shape {bias:?} does not match {c_out} output channels"
            )));
        }
        let out_h = window_extent(height, kh, stride, padding)?;
        let out_w = window_extent(width, kw, stride, padding)?;
        Ok(ConvGeometry {
            batch,
            c_in,
            height,
            width,
            c_out,
            kernel: kh,
            stride,
            padding,
            out_h,
            out_w,
        })
    }

    fn col_rows(&self) -> usize {
        self.c_in * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.c_out, self.out_h, self.out_w]
    }
}

fn im2col(g: &ConvGeometry, image: &[f64], col: &mut [f64]) {
    let (k, s, p) = (g.kernel, g.stride as isize, g.padding as isize);
    let cols = g.col_cols();
    for c in 0..g.c_in {
        let plane = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let iy = oy as isize * s - p + ky as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = ox as isize * s - p + kx as isize;
                        *v = if ix < 0 || ix >= g.width as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(g: &ConvGeometry, col: &[f64], image: &mut [f64]) {
    let (k, s, p) = (g.kernel, g.stride as isize, g.padding as isize);
    let cols = g.col_cols();
    for c in 0..g.c_in {
        let plane = &mut image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let iy = oy as isize * s - p + ky as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let line = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..g.out_w {
                        let ix = ox as isize * s - p + kx as isize;
                        if ix >= 0 && ix < g.width as isize {
                            line[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward(g: &ConvGeometry, input: &[f64], kernel: &[f64], bias: &[f64]) -> Vec<f64> {
    let in_sz = g.c_in * g.height * g.width;
    let out_plane = g.col_cols();
    let out_sz = g.c_out * out_plane;
    let mut out = vec![0.0; g.batch * out_sz];
    let mut col = vec![0.0; g.col_rows() * out_plane];
    for n in 0..g.batch {
        im2col(g, &input[n * in_sz..(n + 1) * in_sz], &mut col);
        let dst = &mut out[n * out_sz..(n + 1) * out_sz];
        for (co, plane) in dst.chunks_mut(out_plane).enumerate() {
            plane.fill(bias[co]);
        }
        gemm(g.c_out, g.col_rows(), out_plane, kernel, false, &col, false, 1.0, dst);
    }
    out
}

pub struct ConvGrads {
    pub input: Vec<f64>,
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn conv2d_backward(
    g: &ConvGeometry,
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
) -> ConvGrads {
    let in_sz = g.c_in * g.height * g.width;
    let out_plane = g.col_cols();
    let out_sz = g.c_out * out_plane;
    let rows = g.col_rows();
    let mut d_input = vec![0.0; input.len()];
    let mut d_kernel = vec![0.0; kernel.len()];
    let mut d_bias = vec![0.0; g.c_out];
    let mut col = vec![0.0; rows * out_plane];
    let mut d_col = vec![0.0; rows * out_plane];
    for n in 0..g.batch {
        let go = &grad_out[n * out_sz..(n + 1) * out_sz];
        for (co, plane) in go.chunks(out_plane).enumerate() {
            d_bias[co] += plane.iter().sum::<f64>();
        }
        im2col(g, &input[n * in_sz..(n + 1) * in_sz], &mut col);
        // dK += dOut · colᵀ
        gemm(g.c_out, out_plane, rows, go, false, &col, true, 1.0, &mut d_kernel);
        // dcol = Kᵀ · dOut
        gemm(rows, g.c_out, out_plane, kernel, true, go, false, 0.0, &mut d_col);
        col2im(g, &d_col, &mut d_input[n * in_sz..(n + 1) * in_sz]);
    }
    ConvGrads {
        input: d_input,
        kernel: d_kernel,
        bias: d_bias,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolGeometry {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl PoolGeometry {
    pub fn new(input: &[usize], kernel: usize, stride: usize) -> Result<Self> {
        if input.len() != 4 {
            return Err(CanError::shape(format!("max_pool2d expects rank-4 input, got {input:?}")));
        }
        Ok(PoolGeometry {
            batch: input[0],
            channels: input[1],
            height: input[2],
            width: input[3],
            kernel,
            stride,
            out_h: window_extent(input[2], kernel, stride, 0)?,
            out_w: window_extent(input[3], kernel, stride, 0)?,
        })
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.channels, self.out_h, self.out_w]
    }
}

/// Windowed maximum plus the flat input index each output was taken from.
/// Ties resolve to the first element in row-major window order.
pub fn max_pool_forward(g: &PoolGeometry, input: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let planes = g.batch * g.channels;
    let out_len = planes * g.out_h * g.out_w;
    let mut out = Vec::with_capacity(out_len);
    let mut argmax = Vec::with_capacity(out_len);
    for plane in 0..planes {
        let base = plane * g.height * g.width;
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = base + oy * g.stride * g.width + ox * g.stride;
                for ky in 0..g.kernel {
                    let row = base + (oy * g.stride + ky) * g.width + ox * g.stride;
                    for kx in 0..g.kernel {
                        let v = input[row + kx];
                        if v > best {
                            best = v;
                            best_idx = row + kx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    (out, argmax)
}

/// How output pixel centres map back onto the source grid when resizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alignment {
    /// First and last samples of source and target coincide.
    Corners,
    /// Pixel centres are matched (`src = (dst + 0.5)·in/out − 0.5`).
    HalfPixel,
}

/// Source interpolation taps for one axis: `(lo, hi, weight_of_hi)`.
pub(crate) fn resize_taps(src: usize, dst: usize, align: Alignment) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|i| {
            let pos = match align {
                Alignment::Corners if dst > 1 => i as f64 * (src - 1) as f64 / (dst - 1) as f64,
                Alignment::Corners => 0.0,
                Alignment::HalfPixel => {
                    ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64)
                }
            };
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Bilinear resize of the two trailing axes of a `planes × h × w` buffer.
pub fn resize_forward(
    input: &[f64],
    planes: usize,
    src: (usize, usize),
    dst: (usize, usize),
    align: Alignment,
) -> Vec<f64> {
    if src == dst {
        return input.to_vec();
    }
    let ty = resize_taps(src.0, dst.0, align);
    let tx = resize_taps(src.1, dst.1, align);
    let mut out = Vec::with_capacity(planes * dst.0 * dst.1);
    for p in 0..planes {
        let plane = &input[p * src.0 * src.1..(p + 1) * src.0 * src.1];
        for &(y0, y1, wy) in &ty {
            for &(x0, x1, wx) in &tx {
                let top = plane[y0 * src.1 + x0] * (1.0 - wx) + plane[y0 * src.1 + x1] * wx;
                let bot = plane[y1 * src.1 + x0] * (1.0 - wx) + plane[y1 * src.1 + x1] * wx;
                out.push(top * (1.0 - wy) + bot * wy);
            }
        }
    }
    out
}

pub fn resize_backward(
    grad_out: &[f64],
    planes: usize,
    src: (usize, usize),
    dst: (usize, usize),
    align: Alignment,
) -> Vec<f64> {
    if src == dst {
        return grad_out.to_vec();
    }
    let ty = resize_taps(src.0, dst.0, align);
    let tx = resize_taps(src.1, dst.1, align);
    let mut grad = vec![0.0; planes * src.0 * src.1];
    for p in 0..planes {
        let gp = &mut grad[p * src.0 * src.1..(p + 1) * src.0 * src.1];
        let go = &grad_out[p * dst.0 * dst.1..(p + 1) * dst.0 * dst.1];
        for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                let g = go[oy * dst.1 + ox];
                gp[y0 * src.1 + x0] += g * (1.0 - wy) * (1.0 - wx);
                gp[y0 * src.1 + x1] += g * (1.0 - wy) * wx;
                gp[y1 * src.1 + x0] += g * wy * (1.0 - wx);
                gp[y1 * src.1 + x1] += g * wy * wx;
            }
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_extent_arithmetic() {
        assert_eq!(window_extent(8, 3, 1, 1).unwrap(), 8);
        assert_eq!(window_extent(4, 2, 2, 0).unwrap(), 2);
        assert!(matches!(window_extent(5, 2, 2, 0), Err(CanError::Config(_))));
        assert!(window_extent(2, 3, 1, 0).is_err());
        assert!(window_extent(4, 2, 0, 0).is_err());
    }

    #[test]
    fn gemm_transposes() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        gemm(2, 2, 2, &a, true, &b, false, 0.0, &mut c);
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
        gemm(2, 2, 2, &a, false, &b, true, 0.0, &mut c);
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
    }

    #[test]
    fn resize_taps_identity_and_corners() {
        let t = resize_taps(2, 3, Alignment::Corners);
        assert_eq!(t[0], (0, 1, 0.0));
        assert_eq!(t[1], (0, 1, 0.5));
        assert_eq!(t[2], (1, 1, 0.0));
    }
}
