//! 2-D convolution over `[N, H, W, C]` maps with `[kh, kw, Cin, Cout]` kernels.
//!
//! Both passes lower the convolution to matrix products (im2col). Output rows
//! are processed in tiles so the patch matrix stays bounded for full-resolution
//! inputs with wide kernels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gemm::gemm;
use super::{EngineError, Scalar, Tensor};

/// Upper bound on patch-matrix elements materialized at once per sample.
const TILE_ELEMENTS: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// No border padding; the output shrinks by `kernel - 1`.
    Valid,
    /// Zero padding so that `out = ceil(in / stride)`.
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub padding: Padding,
    pub in_channels: usize,
    pub out_channels: usize,
}

/// Spatial extents of a convolution output together with the leading padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvOutput {
    pub height: usize,
    pub width: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeometry {
    /// Square kernel, unit stride.
    pub fn square(
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
        padding: Padding,
    ) -> Self {
        Self {
            kernel_h: kernel,
            kernel_w: kernel,
            stride_h: 1,
            stride_w: 1,
            padding,
            in_channels,
            out_channels,
        }
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.kernel_h,
            self.kernel_w,
            self.in_channels,
            self.out_channels,
        ]
    }

    /// Length of one flattened receptive field (`kh * kw * Cin`).
    pub fn patch_len(&self) -> usize {
        self.kernel_h * self.kernel_w * self.in_channels
    }

    /// `(fan_in, fan_out)` as used by Glorot initialization.
    pub fn fans(&self) -> (usize, usize) {
        let area = self.kernel_h * self.kernel_w;
        (area * self.in_channels, area * self.out_channels)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.kernel_h == 0 || self.kernel_w == 0 || self.stride_h == 0 || self.stride_w == 0 {
            return Err(EngineError::InvalidGeometry(format!(
                "kernel and stride extents must be >= 1, got {self:?}"
            )));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(EngineError::InvalidGeometry(format!(
                "channel counts must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn output(&self, height: usize, width: usize) -> Result<ConvOutput, EngineError> {
        self.validate()?;
        let (oh, pt) = axis_output(height, self.kernel_h, self.stride_h, self.padding)?;
        let (ow, pl) = axis_output(width, self.kernel_w, self.stride_w, self.padding)?;
        Ok(ConvOutput {
            height: oh,
            width: ow,
            pad_top: pt,
            pad_left: pl,
        })
    }
}

fn axis_output(
    extent: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize), EngineError> {
    if extent == 0 {
        return Err(EngineError::EmptyExtent { op: "conv2d" });
    }
    match padding {
        Padding::Valid => {
            if extent < kernel {
                return Err(EngineError::InvalidGeometry(format!(
                    "valid convolution with kernel {kernel} on extent {extent}"
                )));
            }
            Ok(((extent - kernel) / stride + 1, 0))
        }
        Padding::Same => {
            let out = extent.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(extent);
            Ok((out, total / 2))
        }
    }
}

/// Gradients produced by [`conv2d_backward`].
#[derive(Debug, Clone)]
pub struct ConvGradients<T: Scalar> {
    pub input: Option<Tensor<T>>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

struct Plan {
    n: usize,
    h: usize,
    w: usize,
    out: ConvOutput,
    rows_per_tile: usize,
}

fn plan<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    geom: &ConvGeometry,
    tile_elements: usize,
) -> Result<Plan, EngineError> {
    let [n, h, w, c] = input.dims4("conv2d")?;
    if c != geom.in_channels {
        return Err(EngineError::ShapeMismatch {
            op: "conv2d",
            detail: format!(
                "input has {c} channels, geometry expects {}",
                geom.in_channels
            ),
        });
    }
    if weights.shape() != geom.weight_shape() {
        return Err(EngineError::ShapeMismatch {
            op: "conv2d",
            detail: format!(
                "weights {:?} do not match geometry {:?}",
                weights.shape(),
                geom.weight_shape()
            ),
        });
    }
    let out = geom.output(h, w)?;
    let rows_per_tile =
        (tile_elements / (out.width * geom.patch_len()).max(1)).clamp(1, out.height);
    Ok(Plan {
        n,
        h,
        w,
        out,
        rows_per_tile,
    })
}

/// Fills `cols` with the receptive fields of output rows `y0..y1` of one sample.
fn im2col<T: Scalar>(
    sample: &[T],
    p: &Plan,
    geom: &ConvGeometry,
    y0: usize,
    y1: usize,
    cols: &mut [T],
) {
    let cin = geom.in_channels;
    let patch = geom.patch_len();
    let ow = p.out.width;
    for oy in y0..y1 {
        for ox in 0..ow {
            let row = &mut cols[((oy - y0) * ow + ox) * patch..][..patch];
            for ky in 0..geom.kernel_h {
                let iy = (oy * geom.stride_h + ky) as isize - p.out.pad_top as isize;
                for kx in 0..geom.kernel_w {
                    let ix = (ox * geom.stride_w + kx) as isize - p.out.pad_left as isize;
                    let dst = &mut row[(ky * geom.kernel_w + kx) * cin..][..cin];
                    if iy < 0 || ix < 0 || iy >= p.h as isize || ix >= p.w as isize {
                        dst.fill(T::zero());
                    } else {
                        let src = (iy as usize * p.w + ix as usize) * cin;
                        dst.copy_from_slice(&sample[src..src + cin]);
                    }
                }
            }
        }
    }
}

/// Scatter-adds patch-matrix gradients for rows `y0..y1` back onto one sample.
fn col2im<T: Scalar>(
    cols: &[T],
    p: &Plan,
    geom: &ConvGeometry,
    y0: usize,
    y1: usize,
    sample: &mut [T],
) {
    let cin = geom.in_channels;
    let patch = geom.patch_len();
    let ow = p.out.width;
    for oy in y0..y1 {
        for ox in 0..ow {
            let row = &cols[((oy - y0) * ow + ox) * patch..][..patch];
            for ky in 0..geom.kernel_h {
                let iy = (oy * geom.stride_h + ky) as isize - p.out.pad_top as isize;
                if iy < 0 || iy >= p.h as isize {
                    continue;
                }
                for kx in 0..geom.kernel_w {
                    let ix = (ox * geom.stride_w + kx) as isize - p.out.pad_left as isize;
                    if ix < 0 || ix >= p.w as isize {
                        continue;
                    }
                    let src = &row[(ky * geom.kernel_w + kx) * cin..][..cin];
                    let dst = (iy as usize * p.w + ix as usize) * cin;
                    for (d, &s) in sample[dst..dst + cin].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// `output[n, y, x, c] = bias[c] + Σ input[n, y·s + ky − pad, x·s + kx − pad, ci] · weights[ky, kx, ci, c]`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    geom: &ConvGeometry,
) -> Result<Tensor<T>, EngineError> {
    conv2d_tiled(input, weights, bias, geom, TILE_ELEMENTS)
}

fn conv2d_tiled<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    geom: &ConvGeometry,
    tile_elements: usize,
) -> Result<Tensor<T>, EngineError> {
    let p = plan(input, weights, geom, tile_elements)?;
    if bias.shape() != [geom.out_channels] {
        return Err(EngineError::ShapeMismatch {
            op: "conv2d",
            detail: format!("bias {:?}, expected [{}]", bias.shape(), geom.out_channels),
        });
    }
    input.ensure_finite("conv2d")?;

    let (oh, ow, cout) = (p.out.height, p.out.width, geom.out_channels);
    let patch = geom.patch_len();
    let in_len = p.h * p.w * geom.in_channels;
    let mut output = Tensor::zeros(&[p.n, oh, ow, cout]);
    let out_len = oh * ow * cout;

    output
        .data_mut()
        .par_chunks_mut(out_len.max(1))
        .enumerate()
        .for_each(|(n, out)| {
            let sample = &input.data()[n * in_len..(n + 1) * in_len];
            let mut cols = vec![T::zero(); p.rows_per_tile * ow * patch];
            let mut y0 = 0;
            while y0 < oh {
                let y1 = (y0 + p.rows_per_tile).min(oh);
                let rows = (y1 - y0) * ow;
                im2col(sample, &p, geom, y0, y1, &mut cols);
                let dst = &mut out[y0 * ow * cout..y1 * ow * cout];
                for px in dst.chunks_mut(cout) {
                    px.copy_from_slice(bias.data());
                }
                gemm(
                    rows,
                    patch,
                    cout,
                    &cols,
                    false,
                    weights.data(),
                    false,
                    T::one(),
                    dst,
                );
                y0 = y1;
            }
        });
    Ok(output)
}

/// Weight, bias and optional input gradients of one sample.
type SamplePartials<T> = (Vec<T>, Vec<T>, Option<Vec<T>>);

/// Gradients of [`conv2d`] with respect to its input, weights and bias.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    geom: &ConvGeometry,
    grad_output: &Tensor<T>,
) -> Result<ConvGradients<T>, EngineError> {
    conv2d_backward_with(input, weights, geom, grad_output, true)
}

/// As [`conv2d_backward`]; the input gradient is skipped unless `want_input` is set.
pub fn conv2d_backward_with<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    geom: &ConvGeometry,
    grad_output: &Tensor<T>,
    want_input: bool,
) -> Result<ConvGradients<T>, EngineError> {
    backward_tiled(input, weights, geom, grad_output, want_input, TILE_ELEMENTS)
}

fn backward_tiled<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    geom: &ConvGeometry,
    grad_output: &Tensor<T>,
    want_input: bool,
    tile_elements: usize,
) -> Result<ConvGradients<T>, EngineError> {
    let p = plan(input, weights, geom, tile_elements)?;
    let (oh, ow, cout) = (p.out.height, p.out.width, geom.out_channels);
    if grad_output.shape() != [p.n, oh, ow, cout] {
        return Err(EngineError::ShapeMismatch {
            op: "conv2d_backward",
            detail: format!(
                "upstream gradient {:?}, expected {:?}",
                grad_output.shape(),
                [p.n, oh, ow, cout]
            ),
        });
    }
    let patch = geom.patch_len();
    let in_len = p.h * p.w * geom.in_channels;
    let out_len = oh * ow * cout;

    // Per-sample partials, reduced below in sample order so the result does
    // not depend on thread scheduling.
    let partials: Vec<SamplePartials<T>> = (0..p.n)
        .into_par_iter()
        .map(|n| {
            let sample = &input.data()[n * in_len..(n + 1) * in_len];
            let gout = &grad_output.data()[n * out_len..(n + 1) * out_len];
            let mut d_weights = vec![T::zero(); patch * cout];
            let mut d_bias = vec![T::zero(); cout];
            for px in gout.chunks(cout) {
                for (b, &g) in d_bias.iter_mut().zip(px) {
                    *b += g;
                }
            }
            let mut d_input = want_input.then(|| vec![T::zero(); in_len]);
            let mut cols = vec![T::zero(); p.rows_per_tile * ow * patch];
            let mut y0 = 0;
            while y0 < oh {
                let y1 = (y0 + p.rows_per_tile).min(oh);
                let rows = (y1 - y0) * ow;
                let g_tile = &gout[y0 * ow * cout..y1 * ow * cout];
                im2col(sample, &p, geom, y0, y1, &mut cols);
                // dW += colsᵀ · dOut
                gemm(
                    patch,
                    rows,
                    cout,
                    &cols,
                    true,
                    g_tile,
                    false,
                    T::one(),
                    &mut d_weights,
                );
                if let Some(d_input) = d_input.as_mut() {
                    // dCols = dOut · Wᵀ
                    let d_cols = &mut cols[..rows * patch];
                    gemm(
                        rows,
                        cout,
                        patch,
                        g_tile,
                        false,
                        weights.data(),
                        true,
                        T::zero(),
                        d_cols,
                    );
                    col2im(d_cols, &p, geom, y0, y1, d_input);
                }
                y0 = y1;
            }
            (d_weights, d_bias, d_input)
        })
        .collect();

    let mut weights_grad = Tensor::zeros(&geom.weight_shape());
    let mut bias_grad = Tensor::zeros(&[cout]);
    let mut input_grad = want_input.then(|| Tensor::zeros(input.shape()));
    for (n, (dw, db, di)) in partials.into_iter().enumerate() {
        for (a, b) in weights_grad.data_mut().iter_mut().zip(dw) {
            *a += b;
        }
        for (a, b) in bias_grad.data_mut().iter_mut().zip(db) {
            *a += b;
        }
        if let (Some(total), Some(di)) = (input_grad.as_mut(), di) {
            total.data_mut()[n * in_len..(n + 1) * in_len].copy_from_slice(&di);
        }
    }
    Ok(ConvGradients {
        input: input_grad,
        weights: weights_grad,
        bias: bias_grad,
    })
}
