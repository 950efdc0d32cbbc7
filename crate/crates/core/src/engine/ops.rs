//! NHWC kernels.
//!
//! Convolution kernels are laid out `[kh, kw, c_in, c_out]`; depthwise
//! kernels are `[kh, kw, c, 1]`. Every convolution has a direct loop-nest
//! implementation (`*_naive`) that serves as the reference for the
//! optimized path.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Square stride, symmetric zero padding and dilation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2dParams {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl Default for Conv2dParams {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 0,
            dilation: 1,
        }
    }
}

impl Conv2dParams {
    pub fn new(stride: usize, padding: usize, dilation: usize) -> Self {
        Self {
            stride,
            padding,
            dilation,
        }
    }

    /// Output extent along one axis, `None` if the kernel does not fit.
    pub fn output_dim(&self, input: usize, kernel: usize) -> Option<usize> {
        if self.stride == 0 || self.dilation == 0 || kernel == 0 {
            return None;
        }
        let span = self.dilation * (kernel - 1) + 1;
        let padded = input + 2 * self.padding;
        (padded >= span).then(|| (padded - span) / self.stride + 1)
    }
}

/// Which convolution implementation to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelPath {
    Naive,
    #[default]
    Optimized,
}

struct ConvGeometry {
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    cout: usize,
    oh: usize,
    ow: usize,
}

fn conv_geometry(
    input: &Tensor,
    kernel: &Tensor,
    bias: Option<&[f32]>,
    p: Conv2dParams,
    depthwise: bool,
) -> Result<ConvGeometry> {
    let [n, h, w, cin] = input.nhwc()?;
    let [kh, kw, kc, kout] = kernel.nhwc().map_err(|_| {
        Error::Shape(format!("kernel must be [kh, kw, cin, cout], got {:?}", kernel.shape()))
    })?;
    if kc != cin {
        return Err(Error::Shape(format!(
            "kernel expects {kc} input channels, input has {cin}"
        )));
    }
    if depthwise && kout != 1 {
        return Err(Error::Shape(format!(
            "depthwise kernel must be [kh, kw, c, 1], got {:?}",
            kernel.shape()
        )));
    }
    let cout = if depthwise { cin } else { kout };
    if let Some(b) = bias {
        if b.len() != cout {
            return Err(Error::Shape(format!("bias has {} entries, need {cout}", b.len())));
        }
    }
    if p.stride == 0 || p.dilation == 0 {
        return Err(Error::Shape("stride and dilation must be >= 1".into()));
    }
    let (Some(oh), Some(ow)) = (p.output_dim(h, kh), p.output_dim(w, kw)) else {
        return Err(Error::Shape(format!(
            "{kh}x{kw} kernel (dilation {}) does not fit a {h}x{w} input with padding {}",
            p.dilation, p.padding
        )));
    };
    Ok(ConvGeometry {
        n,
        h,
        w,
        cin,
        kh,
        kw,
        cout,
        oh,
        ow,
    })
}

/// Source coordinate of tap `k` for output coordinate `o`, if inside the input.
#[inline]
fn tap(o: usize, k: usize, p: Conv2dParams, extent: usize) -> Option<usize> {
    (o * p.stride + k * p.dilation)
        .checked_sub(p.padding)
        .filter(|&i| i < extent)
}

/// Reference cross-correlation: one loop per output/kernel index.
pub fn conv2d_naive(
    input: &Tensor,
    kernel: &Tensor,
    bias: Option<&[f32]>,
    p: Conv2dParams,
) -> Result<Tensor> {
    let g = conv_geometry(input, kernel, bias, p, false)?;
    let (x, k) = (input.data(), kernel.data());
    let mut out = vec![0.0f32; g.n * g.oh * g.ow * g.cout];
    for b in 0..g.n {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                for co in 0..g.cout {
                    let mut acc = bias.map_or(0.0, |bv| bv[co]);
                    for ky in 0..g.kh {
                        let Some(iy) = tap(oy, ky, p, g.h) else { continue };
                        for kx in 0..g.kw {
                            let Some(ix) = tap(ox, kx, p, g.w) else { continue };
                            for ci in 0..g.cin {
                                acc += x[((b * g.h + iy) * g.w + ix) * g.cin + ci]
                                    * k[((ky * g.kw + kx) * g.cin + ci) * g.cout + co];
                            }
                        }
                    }
                    out[((b * g.oh + oy) * g.ow + ox) * g.cout + co] = acc;
                }
            }
        }
    }
    Tensor::new(vec![g.n, g.oh, g.ow, g.cout], out)
}

/// Patch-gather convolution.
///
/// For each output row the receptive fields are gathered into a
/// `[ow, kh*kw*cin]` patch matrix (zeros where padding applies) and
/// multiplied with the transposed kernel `[cout, kh*kw*cin]`. Output rows are
/// independent, so they are computed in parallel without affecting results.
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: Option<&[f32]>, p: Conv2dParams) -> Result<Tensor> {
    let g = conv_geometry(input, kernel, bias, p, false)?;
    let depth = g.kh * g.kw * g.cin;
    let k = kernel.data();
    let mut kt = vec![0.0f32; g.cout * depth];
    for (r, row) in k.chunks_exact(g.cout).enumerate() {
        for (co, &v) in row.iter().enumerate() {
            kt[co * depth + r] = v;
        }
    }
    let x = input.data();
    let pointwise = g.kh == 1 && g.kw == 1 && p.stride == 1 && p.padding == 0;
    let row_len = g.ow * g.cout;
    let mut out = vec![0.0f32; g.n * g.oh * row_len];
    out.par_chunks_mut(row_len).enumerate().for_each(|(row, out_row)| {
        let (b, oy) = (row / g.oh, row % g.oh);
        let gathered;
        let patches: &[f32] = if pointwise {
            let start = (b * g.h + oy) * g.w * g.cin;
            &x[start..start + g.w * g.cin]
        } else {
            let mut buf = vec![0.0f32; g.ow * depth];
            for ky in 0..g.kh {
                let Some(iy) = tap(oy, ky, p, g.h) else { continue };
                let in_row = &x[(b * g.h + iy) * g.w * g.cin..(b * g.h + iy + 1) * g.w * g.cin];
                for kx in 0..g.kw {
                    let off = (ky * g.kw + kx) * g.cin;
                    for ox in 0..g.ow {
                        if let Some(ix) = tap(ox, kx, p, g.w) {
                            buf[ox * depth + off..ox * depth + off + g.cin]
                                .copy_from_slice(&in_row[ix * g.cin..(ix + 1) * g.cin]);
                        }
                    }
                }
            }
            gathered = buf;
            &gathered
        };
        for (ox, out_px) in out_row.chunks_exact_mut(g.cout).enumerate() {
            let patch = &patches[ox * depth..(ox + 1) * depth];
            for (co, o) in out_px.iter_mut().enumerate() {
                let mut acc = bias.map_or(0.0, |bv| bv[co]);
                for (a, w) in patch.iter().zip(&kt[co * depth..(co + 1) * depth]) {
                    acc += a * w;
                }
                *o = acc;
            }
        }
    });
    Tensor::new(vec![g.n, g.oh, g.ow, g.cout], out)
}

pub fn depthwise_conv_naive(
    input: &Tensor,
    kernel: &Tensor,
    bias: Option<&[f32]>,
    p: Conv2dParams,
) -> Result<Tensor> {
    let g = conv_geometry(input, kernel, bias, p, true)?;
    let (x, k) = (input.data(), kernel.data());
    let c = g.cin;
    let mut out = vec![0.0f32; g.n * g.oh * g.ow * c];
    for b in 0..g.n {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                for ch in 0..c {
                    let mut acc = bias.map_or(0.0, |bv| bv[ch]);
                    for ky in 0..g.kh {
                        let Some(iy) = tap(oy, ky, p, g.h) else { continue };
                        for kx in 0..g.kw {
                            let Some(ix) = tap(ox, kx, p, g.w) else { continue };
                            acc += x[((b * g.h + iy) * g.w + ix) * c + ch] * k[(ky * g.kw + kx) * c + ch];
                        }
                    }
                    out[((b * g.oh + oy) * g.ow + ox) * c + ch] = acc;
                }
            }
        }
    }
    Tensor::new(vec![g.n, g.oh, g.ow, c], out)
}

/// Per-channel spatial convolution, vectorized across channels.
pub fn depthwise_conv(input: &Tensor, kernel: &Tensor, bias: Option<&[f32]>, p: Conv2dParams) -> Result<Tensor> {
    let g = conv_geometry(input, kernel, bias, p, true)?;
    let (x, k) = (input.data(), kernel.data());
    let c = g.cin;
    let row_len = g.ow * c;
    let mut out = vec![0.0f32; g.n * g.oh * row_len];
    out.par_chunks_mut(row_len).enumerate().for_each(|(row, out_row)| {
        let (b, oy) = (row / g.oh, row % g.oh);
        for (ox, px) in out_row.chunks_exact_mut(c).enumerate() {
            match bias {
                Some(bv) => px.copy_from_slice(bv),
                None => px.fill(0.0),
            }
            for ky in 0..g.kh {
                let Some(iy) = tap(oy, ky, p, g.h) else { continue };
                for kx in 0..g.kw {
                    let Some(ix) = tap(ox, kx, p, g.w) else { continue };
                    let src = &x[((b * g.h + iy) * g.w + ix) * c..][..c];
                    let taps = &k[(ky * g.kw + kx) * c..][..c];
                    for ((o, a), w) in px.iter_mut().zip(src).zip(taps) {
                        *o += a * w;
                    }
                }
            }
        }
    });
    Tensor::new(vec![g.n, g.oh, g.ow, c], out)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn hard_sigmoid_scalar(v: f32) -> f32 {
    (v + 3.0).clamp(0.0, 6.0) / 6.0
}

/// `clamp(x + 3, 0, 6) / 6`
pub fn hard_sigmoid(x: &Tensor) -> Tensor {
    x.map(hard_sigmoid_scalar)
}

/// `x * clamp(x + 3, 0, 6) / 6`
pub fn hard_swish(x: &Tensor) -> Tensor {
    x.map(|v| v * (v + 3.0).clamp(0.0, 6.0) / 6.0)
}

/// Mean over the spatial axes: `[n, h, w, c] -> [n, 1, 1, c]`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let [n, h, w, c] = x.nhwc()?;
    let mut out = vec![0.0f32; n * c];
    for (b, image) in x.data().chunks_exact(h * w * c).enumerate() {
        let acc = &mut out[b * c..(b + 1) * c];
        for px in image.chunks_exact(c) {
            for (a, v) in acc.iter_mut().zip(px) {
                *a += v;
            }
        }
        let inv = 1.0 / (h * w) as f32;
        acc.iter_mut().for_each(|a| *a *= inv);
    }
    Tensor::new(vec![n, 1, 1, c], out)
}

/// Squeeze-and-excitation parameters; kernels are 1x1 convolutions.
#[derive(Debug, Clone)]
pub struct SeWeights<'a> {
    /// `[1, 1, c, r]`
    pub reduce_kernel: &'a Tensor,
    pub reduce_bias: &'a [f32],
    /// `[1, 1, r, c]`
    pub expand_kernel: &'a Tensor,
    pub expand_bias: &'a [f32],
}

/// Channel gating: pool, reduce + relu, expand + hard-sigmoid, rescale.
pub fn se_block(x: &Tensor, w: &SeWeights<'_>) -> Result<Tensor> {
    let [n, h, wd, c] = x.nhwc()?;
    let pooled = global_avg_pool(x)?;
    let unit = Conv2dParams::default();
    let squeezed = relu(&conv2d_naive(&pooled, w.reduce_kernel, Some(w.reduce_bias), unit)?);
    let gate = hard_sigmoid(&conv2d_naive(&squeezed, w.expand_kernel, Some(w.expand_bias), unit)?);
    if gate.shape() != [n, 1, 1, c] {
        return Err(Error::Shape(format!(
            "gate shape {:?} does not match {c} channels",
            gate.shape()
        )));
    }
    let mut out = x.data().to_vec();
    for (b, image) in out.chunks_exact_mut(h * wd * c).enumerate() {
        let g = &gate.data()[b * c..(b + 1) * c];
        for px in image.chunks_exact_mut(c) {
            for (v, s) in px.iter_mut().zip(g) {
                *v *= s;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Nearest-neighbour resize with floor index mapping
/// `src = floor(dst * in / out)`; integer upscales replicate blocks.
pub fn resize_nearest(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let [n, h, w, c] = x.nhwc()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::Shape("resize target must be non-empty".into()));
    }
    let src = x.data();
    let mut out = Vec::with_capacity(n * out_h * out_w * c);
    for b in 0..n {
        for y in 0..out_h {
            let sy = y * h / out_h;
            for xo in 0..out_w {
                let sx = xo * w / out_w;
                let at = ((b * h + sy) * w + sx) * c;
                out.extend_from_slice(&src[at..at + c]);
            }
        }
    }
    Tensor::new(vec![n, out_h, out_w, c], out)
}

/// Bilinear resize with half-pixel centers (`align_corners = false`);
/// source coordinates are clamped to the image.
pub fn resize_bilinear(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let [n, h, w, c] = x.nhwc()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::Shape("resize target must be non-empty".into()));
    }
    let axis = |out: usize, inp: usize| -> Vec<(usize, usize, f32)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let (ys, xs) = (axis(out_h, h), axis(out_w, w));
    let src = x.data();
    let px = |b: usize, y: usize, xx: usize| &src[((b * h + y) * w + xx) * c..][..c];
    let mut out = Vec::with_capacity(n * out_h * out_w * c);
    for b in 0..n {
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let (a, bb, cc, d) = (px(b, y0, x0), px(b, y0, x1), px(b, y1, x0), px(b, y1, x1));
                for ch in 0..c {
                    let top = a[ch] + (bb[ch] - a[ch]) * fx;
                    let bottom = cc[ch] + (d[ch] - cc[ch]) * fx;
                    out.push(top + (bottom - top) * fy);
                }
            }
        }
    }
    Tensor::new(vec![n, out_h, out_w, c], out)
}

/// Concatenates rank-4 tensors along `axis`; all other extents must agree.
pub fn concat(tensors: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = tensors
        .first()
        .ok_or_else(|| Error::Shape("concat needs at least one tensor".into()))?;
    let shape = first.nhwc()?;
    if axis >= 4 {
        return Err(Error::Shape(format!("concat axis {axis} out of range")));
    }
    let mut total = 0;
    for t in tensors {
        let s = t.nhwc()?;
        if (0..4).any(|d| d != axis && s[d] != shape[d]) {
            return Err(Error::Shape(format!(
                "cannot concat {:?} with {:?} on axis {axis}",
                first.shape(),
                t.shape()
            )));
        }
        total += s[axis];
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for t in tensors {
            let block = t.shape()[axis] * inner;
            out.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
        }
    }
    let mut out_shape = shape.to_vec();
    out_shape[axis] = total;
    Tensor::new(out_shape, out)
}

/// Elementwise sum of equally-shaped tensors.
pub fn add(tensors: &[&Tensor]) -> Result<Tensor> {
    let first = tensors
        .first()
        .ok_or_else(|| Error::Shape("add needs at least one tensor".into()))?;
    let mut out = first.data().to_vec();
    for t in &tensors[1..] {
        if t.shape() != first.shape() {
            return Err(Error::Shape(format!(
                "cannot add {:?} and {:?}",
                first.shape(),
                t.shape()
            )));
        }
        out.iter_mut().zip(t.data()).for_each(|(a, b)| *a += b);
    }
    Tensor::new(first.shape().to_vec(), out)
}
