//! Dense N×C×H×W tensors and the forward/adjoint kernels behind every
//! primitive on the tape.
//!
//! Kernels are free functions over slices so that the tape, the fake-quant
//! simulation and the integer engine's float islands all run the exact same
//! arithmetic.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

use crate::error::{shape_err, Error, Result};

/// Scalar type of a tensor. Implemented for `f32` (training and inference)
/// and `f64` (gradient verification).
pub trait Real:
    Float + Default + Debug + Display + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Batch, channels, height, width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub const fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Dense 4-D tensor with an optional accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<R: Real = f32> {
    shape: Shape,
    data: Vec<R>,
    grad: Option<Vec<R>>,
}

impl<R: Real> Tensor<R> {
    pub fn from_vec(shape: Shape, data: Vec<R>) -> Result<Self> {
        if data.len() != shape.numel() {
            return shape_err(
                "from_vec",
                format!("{} values for shape {shape} ({} expected)", data.len(), shape.numel()),
            );
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, R::zero())
    }

    pub fn full(shape: Shape, v: R) -> Self {
        Tensor {
            shape,
            data: vec![v; shape.numel()],
            grad: None,
        }
    }

    /// A 1×1×1×1 tensor.
    pub fn scalar(v: R) -> Self {
        Self::full(Shape::new(1, 1, 1, 1), v)
    }

    /// A 1×C×1×1 per-channel vector.
    pub fn channel_vector(values: Vec<R>) -> Self {
        let c = values.len();
        Tensor {
            shape: Shape::new(1, c, 1, 1),
            data: values,
            grad: None,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<R> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn grad(&self) -> Option<&[R]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub(crate) fn accumulate_grad(&mut self, g: &[R]) {
        debug_assert_eq!(g.len(), self.data.len());
        match &mut self.grad {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b),
            None => self.grad = Some(g.to_vec()),
        }
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> R {
        self.data[0]
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> R {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + y) * self.shape.w + x
    }

    /// One H×W plane.
    pub fn plane(&self, n: usize, c: usize) -> &[R] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn map(&self, f: impl Fn(R) -> R) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    /// Converts the element type, dropping any gradient.
    pub fn cast<S: Real>(&self) -> Tensor<S> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| S::of(v.as_f64())).collect(),
            grad: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sample `i` of the batch as its own 1×C×H×W tensor.
    pub fn sample(&self, i: usize) -> Tensor<R> {
        let per = self.shape.c * self.shape.plane();
        Tensor {
            shape: Shape::new(1, self.shape.c, self.shape.h, self.shape.w),
            data: self.data[i * per..(i + 1) * per].to_vec(),
            grad: None,
        }
    }

    /// Stacks equally shaped tensors along the batch axis.
    pub fn stack(items: &[&Tensor<R>]) -> Result<Tensor<R>> {
        let first = items
            .first()
            .ok_or_else(|| Error::Invalid("stack of zero tensors".into()))?;
        let s = first.shape;
        let mut data = Vec::with_capacity(s.numel() * items.len());
        let mut n = 0;
        for t in items {
            if (t.shape.c, t.shape.h, t.shape.w) != (s.c, s.h, s.w) {
                return shape_err("stack", format!("{} vs {}", t.shape, s));
            }
            data.extend_from_slice(&t.data);
            n += t.shape.n;
        }
        Tensor::from_vec(Shape::new(n, s.c, s.h, s.w), data)
    }

    /// Copy of channels `start..start + len`.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Tensor<R>> {
        let s = self.shape;
        if start + len > s.c {
            return shape_err(
                "slice_channels",
                format!("channels {start}..{} out of {}", start + len, s.c),
            );
        }
        let p = s.plane();
        let mut data = Vec::with_capacity(s.n * len * p);
        for n in 0..s.n {
            let base = (n * s.c + start) * p;
            data.extend_from_slice(&self.data[base..base + len * p]);
        }
        Tensor::from_vec(Shape::new(s.n, len, s.h, s.w), data)
    }
}

fn same_shape(op: &'static str, a: Shape, b: Shape) -> Result<()> {
    if a != b {
        return shape_err(op, format!("{a} vs {b}"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

/// Geometry of a 2-D cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub input: Shape,
    /// out-ch × in-ch × kh × kw
    pub kernel: Shape,
    pub stride: usize,
    pub padding: usize,
    pub output: Shape,
}

impl ConvGeometry {
    pub fn new(input: Shape, kernel: Shape, stride: usize, padding: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Invalid("conv2d stride must be positive".into()));
        }
        if kernel.c != input.c {
            return shape_err(
                "conv2d",
                format!(
                    "in-channels: kernel expects {} but input has {}",
                    kernel.c, input.c
                ),
            );
        }
        if kernel.h.is_multiple_of(2) || kernel.w.is_multiple_of(2) {
            return shape_err(
                "conv2d",
                format!("kernel size {}x{} must be odd", kernel.h, kernel.w),
            );
        }
        if input.h + 2 * padding < kernel.h || input.w + 2 * padding < kernel.w {
            return shape_err(
                "conv2d",
                format!("height/width {}x{} smaller than kernel", input.h, input.w),
            );
        }
        let oh = (input.h + 2 * padding - kernel.h) / stride + 1;
        let ow = (input.w + 2 * padding - kernel.w) / stride + 1;
        Ok(ConvGeometry {
            input,
            kernel,
            stride,
            padding,
            output: Shape::new(input.n, kernel.n, oh, ow),
        })
    }

    /// Input row for output row `oy` and kernel row `ky`, if inside the image.
    #[inline]
    pub fn input_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
        (iy >= 0 && (iy as usize) < self.input.h).then_some(iy as usize)
    }

    /// Range of output columns whose tap `kx` lands inside the input.
    #[inline]
    pub fn valid_cols(&self, kx: usize) -> std::ops::Range<usize> {
        let (s, p) = (self.stride, self.padding);
        let lo = if p > kx { (p - kx).div_ceil(s) } else { 0 };
        let last = self.input.w as isize - 1 + p as isize - kx as isize;
        let hi = if last < 0 {
            0
        } else {
            (last as usize / s + 1).min(self.output.w)
        };
        lo..hi.max(lo)
    }
}

pub fn conv2d_forward<R: Real>(
    g: &ConvGeometry,
    input: &[R],
    weight: &[R],
    bias: &[R],
) -> Vec<R> {
    let (ci, co) = (g.input.c, g.kernel.n);
    let (kh, kw) = (g.kernel.h, g.kernel.w);
    let (ih, iw) = (g.input.h, g.input.w);
    let (oh, ow) = (g.output.h, g.output.w);
    let s = g.stride;
    let mut out = vec![R::zero(); g.output.numel()];
    for n in 0..g.input.n {
        for oc in 0..co {
            let ob = (n * co + oc) * oh * ow;
            let plane = &mut out[ob..ob + oh * ow];
            plane.iter_mut().for_each(|v| *v = bias[oc]);
            for ic in 0..ci {
                let ib = (n * ci + ic) * ih * iw;
                let inp = &input[ib..ib + ih * iw];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = weight[((oc * ci + ic) * kh + ky) * kw + kx];
                        let cols = g.valid_cols(kx);
                        let off = cols.start * s + kx - g.padding;
                        for oy in 0..oh {
                            let Some(iy) = g.input_row(oy, ky) else { continue };
                            let row_in = &inp[iy * iw..(iy + 1) * iw];
                            let row_out = &mut plane[oy * ow..(oy + 1) * ow];
                            if s == 1 {
                                let src = &row_in[off..off + cols.len()];
                                for (o, &x) in row_out[cols.clone()].iter_mut().zip(src) {
                                    *o += wv * x;
                                }
                            } else {
                                for (j, o) in row_out[cols.clone()].iter_mut().enumerate() {
                                    *o += wv * row_in[off + j * s];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of the convolution input: transposed correlation of the upstream
/// gradient with the kernel.
pub fn conv2d_backward_input<R: Real>(g: &ConvGeometry, weight: &[R], upstream: &[R]) -> Vec<R> {
    let (ci, co) = (g.input.c, g.kernel.n);
    let (kh, kw) = (g.kernel.h, g.kernel.w);
    let (ih, iw) = (g.input.h, g.input.w);
    let (oh, ow) = (g.output.h, g.output.w);
    let s = g.stride;
    let mut gin = vec![R::zero(); g.input.numel()];
    for n in 0..g.input.n {
        for oc in 0..co {
            let ob = (n * co + oc) * oh * ow;
            let gout = &upstream[ob..ob + oh * ow];
            for ic in 0..ci {
                let ib = (n * ci + ic) * ih * iw;
                let gplane = &mut gin[ib..ib + ih * iw];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = weight[((oc * ci + ic) * kh + ky) * kw + kx];
                        let cols = g.valid_cols(kx);
                        let off = cols.start * s + kx - g.padding;
                        for oy in 0..oh {
                            let Some(iy) = g.input_row(oy, ky) else { continue };
                            let row_g = &gout[oy * ow..(oy + 1) * ow];
                            let row_in = &mut gplane[iy * iw..(iy + 1) * iw];
                            if s == 1 {
                                let dst = &mut row_in[off..off + cols.len()];
                                for (d, &gv) in dst.iter_mut().zip(&row_g[cols.clone()]) {
                                    *d += wv * gv;
                                }
                            } else {
                                for (j, &gv) in row_g[cols.clone()].iter().enumerate() {
                                    row_in[off + j * s] += wv * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    gin
}

/// Adjoints of the kernel (input-patch correlation) and bias (spatial sum).
pub fn conv2d_backward_params<R: Real>(
    g: &ConvGeometry,
    input: &[R],
    upstream: &[R],
) -> (Vec<R>, Vec<R>) {
    let (ci, co) = (g.input.c, g.kernel.n);
    let (kh, kw) = (g.kernel.h, g.kernel.w);
    let (ih, iw) = (g.input.h, g.input.w);
    let (oh, ow) = (g.output.h, g.output.w);
    let s = g.stride;
    let mut gw = vec![R::zero(); g.kernel.numel()];
    let mut gb = vec![R::zero(); co];
    for n in 0..g.input.n {
        for oc in 0..co {
            let ob = (n * co + oc) * oh * ow;
            let gout = &upstream[ob..ob + oh * ow];
            gb[oc] += gout.iter().copied().sum::<R>();
            for ic in 0..ci {
                let ib = (n * ci + ic) * ih * iw;
                let inp = &input[ib..ib + ih * iw];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let cols = g.valid_cols(kx);
                        let off = cols.start * s + kx - g.padding;
                        let mut acc = R::zero();
                        for oy in 0..oh {
                            let Some(iy) = g.input_row(oy, ky) else { continue };
                            let row_g = &gout[oy * ow..(oy + 1) * ow];
                            let row_in = &inp[iy * iw..(iy + 1) * iw];
                            if s == 1 {
                                let src = &row_in[off..off + cols.len()];
                                for (&gv, &x) in row_g[cols.clone()].iter().zip(src) {
                                    acc += gv * x;
                                }
                            } else {
                                for (j, &gv) in row_g[cols.clone()].iter().enumerate() {
                                    acc += gv * row_in[off + j * s];
                                }
                            }
                        }
                        gw[((oc * ci + ic) * kh + ky) * kw + kx] += acc;
                    }
                }
            }
        }
    }
    (gw, gb)
}

/// `conv2d` over whole tensors. `weight` is out-ch × in-ch × kh × kw and
/// `bias` has one entry per output channel.
pub fn conv2d<R: Real>(
    input: &Tensor<R>,
    weight: &Tensor<R>,
    bias: &Tensor<R>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<R>> {
    let g = ConvGeometry::new(input.shape(), weight.shape(), stride, padding)?;
    if bias.numel() != weight.shape().n {
        return shape_err(
            "conv2d",
            format!(
                "out-channels: bias has {} entries for {} kernels",
                bias.numel(),
                weight.shape().n
            ),
        );
    }
    Tensor::from_vec(
        g.output,
        conv2d_forward(&g, input.data(), weight.data(), bias.data()),
    )
}

// ---------------------------------------------------------------------------
// Element-wise and structural kernels
// ---------------------------------------------------------------------------

pub fn tanh<R: Real>(x: &Tensor<R>) -> Tensor<R> {
    x.map(|v| v.tanh())
}

pub fn leaky_relu_value<R: Real>(v: R, slope: R) -> R {
    if v >= R::zero() {
        v
    } else {
        slope * v
    }
}

pub fn leaky_relu<R: Real>(x: &Tensor<R>, slope: R) -> Tensor<R> {
    x.map(|v| leaky_relu_value(v, slope))
}

pub fn hadamard<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> Result<Tensor<R>> {
    same_shape("hadamard", a.shape(), b.shape())?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    Tensor::from_vec(a.shape(), data)
}

pub fn add<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> Result<Tensor<R>> {
    same_shape("add", a.shape(), b.shape())?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Tensor::from_vec(a.shape(), data)
}

pub fn clip01<R: Real>(x: &Tensor<R>) -> Tensor<R> {
    x.map(|v| v.max(R::zero()).min(R::one()))
}

pub fn upsample_nearest2x<R: Real>(x: &Tensor<R>) -> Tensor<R> {
    let s = x.shape();
    let (h2, w2) = (s.h * 2, s.w * 2);
    let mut data = Vec::with_capacity(s.numel() * 4);
    for plane in x.data().chunks(s.plane()) {
        for y in 0..h2 {
            let row = &plane[(y / 2) * s.w..(y / 2 + 1) * s.w];
            for &v in row {
                data.push(v);
                data.push(v);
            }
        }
    }
    Tensor {
        shape: Shape::new(s.n, s.c, h2, w2),
        data,
        grad: None,
    }
}

/// Adjoint of nearest 2× upsampling: sums each 2×2 block.
pub fn upsample_nearest2x_backward<R: Real>(input: Shape, upstream: &[R]) -> Vec<R> {
    let (h, w) = (input.h, input.w);
    let w2 = w * 2;
    let mut g = vec![R::zero(); input.numel()];
    for (pi, gp) in g.chunks_mut(h * w).enumerate() {
        let up = &upstream[pi * h * w * 4..(pi + 1) * h * w * 4];
        for y in 0..h {
            for x in 0..w {
                let r0 = 2 * y * w2 + 2 * x;
                let r1 = r0 + w2;
                gp[y * w + x] = up[r0] + up[r0 + 1] + up[r1] + up[r1 + 1];
            }
        }
    }
    g
}

pub fn concat_channels<R: Real>(parts: &[&Tensor<R>]) -> Result<Tensor<R>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Invalid("concat of zero tensors".into()))?
        .shape();
    for p in parts {
        let s = p.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return shape_err(
                "concat_channels",
                format!("part {s} does not share batch/height/width with {first}"),
            );
        }
    }
    let c: usize = parts.iter().map(|p| p.shape().c).sum();
    let plane = first.plane();
    let mut data = Vec::with_capacity(first.n * c * plane);
    for n in 0..first.n {
        for p in parts {
            let per = p.shape().c * plane;
            data.extend_from_slice(&p.data()[n * per..(n + 1) * per]);
        }
    }
    Tensor::from_vec(Shape::new(first.n, c, first.h, first.w), data)
}

/// Saved statistics of an instance-norm forward pass.
#[derive(Clone, Debug)]
pub struct NormStats<R: Real> {
    /// Normalized input (x − mean) / sqrt(var + eps).
    pub xhat: Vec<R>,
    /// 1 / sqrt(var + eps) per (sample, channel) plane.
    pub inv_std: Vec<R>,
}

/// Instance normalization with a per-channel affine. A 1×1 plane has zero
/// variance, so its output is exactly `beta`.
pub fn instance_norm<R: Real>(
    x: &Tensor<R>,
    gamma: &[R],
    beta: &[R],
    eps: R,
) -> Result<(Tensor<R>, NormStats<R>)> {
    let s = x.shape();
    if gamma.len() != s.c || beta.len() != s.c {
        return shape_err(
            "instance_norm",
            format!(
                "channels: gamma/beta have {}/{} entries for {} channels",
                gamma.len(),
                beta.len(),
                s.c
            ),
        );
    }
    let p = s.plane();
    let mut out = Vec::with_capacity(s.numel());
    let mut xhat = Vec::with_capacity(s.numel());
    let mut inv_std = Vec::with_capacity(s.n * s.c);
    for (pi, plane) in x.data().chunks(p).enumerate() {
        let c = pi % s.c;
        let mean = plane.iter().map(|v| v.as_f64()).sum::<f64>() / p as f64;
        let var = plane
            .iter()
            .map(|v| {
                let d = v.as_f64() - mean;
                d * d
            })
            .sum::<f64>()
            / p as f64;
        let istd = R::of(1.0 / (var + eps.as_f64()).sqrt());
        let mean = R::of(mean);
        inv_std.push(istd);
        for &v in plane {
            let h = (v - mean) * istd;
            xhat.push(h);
            out.push(h * gamma[c] + beta[c]);
        }
    }
    Ok((Tensor::from_vec(s, out)?, NormStats { xhat, inv_std }))
}

/// Adjoints of instance norm: (input, gamma, beta).
pub fn instance_norm_backward<R: Real>(
    shape: Shape,
    gamma: &[R],
    stats: &NormStats<R>,
    upstream: &[R],
) -> (Vec<R>, Vec<R>, Vec<R>) {
    let p = shape.plane();
    let pf = p as f64;
    let mut gx = vec![R::zero(); shape.numel()];
    let mut gg = vec![R::zero(); shape.c];
    let mut gb = vec![R::zero(); shape.c];
    for pi in 0..shape.n * shape.c {
        let c = pi % shape.c;
        let range = pi * p..(pi + 1) * p;
        let up = &upstream[range.clone()];
        let xh = &stats.xhat[range.clone()];
        let sum_g: f64 = up.iter().map(|v| v.as_f64()).sum();
        let sum_gx: f64 = up.iter().zip(xh).map(|(g, h)| g.as_f64() * h.as_f64()).sum();
        gb[c] += R::of(sum_g);
        gg[c] += R::of(sum_gx);
        let k = gamma[c] * stats.inv_std[pi];
        let mg = R::of(sum_g / pf);
        let mgx = R::of(sum_gx / pf);
        for ((d, &g), &h) in gx[range].iter_mut().zip(up).zip(xh) {
            *d = k * (g - mg - h * mgx);
        }
    }
    (gx, gg, gb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t(shape: Shape, data: Vec<f32>) -> Tensor<f32> {
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = t(Shape::new(1, 1, 3, 4), (0..12).map(|v| v as f32).collect());
        let w = Tensor::full(Shape::new(1, 1, 1, 1), 1.0);
        let b = Tensor::channel_vector(vec![0.0]);
        assert_eq!(conv2d(&x, &w, &b, 1, 0).unwrap().data(), x.data());
    }

    #[test]
    fn ones_kernel_counts_neighbours() {
        let x = Tensor::full(Shape::new(1, 1, 3, 3), 1.0f32);
        let w = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
        let b = Tensor::channel_vector(vec![0.0]);
        let y = conv2d(&x, &w, &b, 1, 1).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn strided_output_shape() {
        let g = ConvGeometry::new(Shape::new(1, 5, 8, 8), Shape::new(2, 5, 3, 3), 2, 1).unwrap();
        assert_eq!(g.output, Shape::new(1, 2, 4, 4));
        let g = ConvGeometry::new(Shape::new(1, 5, 7, 9), Shape::new(2, 5, 3, 3), 2, 1).unwrap();
        assert_eq!((g.output.h, g.output.w), (4, 5));
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let err = ConvGeometry::new(Shape::new(1, 4, 8, 8), Shape::new(2, 3, 3, 3), 1, 1)
            .unwrap_err()
            .to_string();
        assert!(err.contains("in-channels"), "{err}");
    }

    #[test]
    fn conv_matches_naive_reference() {
        // direct six-loop reference, strides 1 and 2
        let x: Vec<f32> = (0..2 * 3 * 7 * 6).map(|i| ((i * 37 % 17) as f32 - 8.0) / 7.0).collect();
        let x = t(Shape::new(2, 3, 7, 6), x);
        let w: Vec<f32> = (0..4 * 3 * 9).map(|i| ((i * 11 % 13) as f32 - 6.0) / 5.0).collect();
        let w = t(Shape::new(4, 3, 3, 3), w);
        let b = Tensor::channel_vector(vec![0.5, -0.25, 0.0, 1.0]);
        for stride in [1, 2] {
            let y = conv2d(&x, &w, &b, stride, 1).unwrap();
            let s = y.shape();
            for n in 0..s.n {
                for o in 0..s.c {
                    for oy in 0..s.h {
                        for ox in 0..s.w {
                            let mut acc = b.data()[o];
                            for i in 0..3 {
                                for ky in 0..3 {
                                    for kx in 0..3 {
                                        let iy = (oy * stride + ky) as isize - 1;
                                        let ix = (ox * stride + kx) as isize - 1;
                                        if iy < 0 || ix < 0 || iy >= 7 || ix >= 6 {
                                            continue;
                                        }
                                        acc += w.at(o, i, ky, kx)
                                            * x.at(n, i, iy as usize, ix as usize);
                                    }
                                }
                            }
                            assert_abs_diff_eq!(y.at(n, o, oy, ox), acc, epsilon = 1e-5);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn tanh_values() {
        let x = t(Shape::new(1, 1, 1, 3), vec![0.0, 20.0, 1.0]);
        let y = tanh(&x);
        assert_eq!(y.data()[0], 0.0);
        assert!((1.0 - y.data()[1]).abs() < 1e-6);
        assert_abs_diff_eq!(y.data()[2], 0.761_594_2, epsilon = 1e-6);
    }

    #[test]
    fn hadamard_cases() {
        let a = t(Shape::new(1, 1, 1, 2), vec![2.0, 3.0]);
        let b = t(Shape::new(1, 1, 1, 2), vec![4.0, -1.0]);
        assert_eq!(hadamard(&a, &b).unwrap().data(), &[8.0, -3.0]);
        let ones = Tensor::full(a.shape(), 1.0);
        assert_eq!(hadamard(&a, &ones).unwrap(), a);
        let zeros = Tensor::zeros(a.shape());
        assert!(hadamard(&a, &zeros).unwrap().data().iter().all(|&v| v == 0.0));
        let c = Tensor::<f32>::zeros(Shape::new(1, 1, 2, 1));
        assert!(hadamard(&a, &c).is_err());
    }

    #[test]
    fn leaky_relu_values() {
        let x = t(Shape::new(1, 1, 1, 3), vec![5.0, -1.0, 0.0]);
        let y = leaky_relu(&x, 0.2);
        assert_eq!(y.data()[0], 5.0);
        assert_abs_diff_eq!(y.data()[1], -0.2);
        assert_eq!(y.data()[2], 0.0);
    }

    #[test]
    fn instance_norm_cases() {
        let c = Tensor::full(Shape::new(1, 1, 2, 2), 3.0f32);
        let (y, _) = instance_norm(&c, &[1.0], &[0.0], 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));

        let x = t(Shape::new(1, 1, 1, 2), vec![-1.0, 1.0]);
        let (y, _) = instance_norm(&x, &[1.0], &[0.0], 1e-5).unwrap();
        assert_abs_diff_eq!(y.data()[0], -0.999_995, epsilon = 1e-6);
        assert_abs_diff_eq!(y.data()[1], 0.999_995, epsilon = 1e-6);

        // single-pixel plane: output is beta
        let one = t(Shape::new(1, 2, 1, 1), vec![7.0, -2.0]);
        let (y, _) = instance_norm(&one, &[3.0, 3.0], &[0.5, -0.5], 1e-5).unwrap();
        assert_eq!(y.data(), &[0.5, -0.5]);

        let x = t(Shape::new(1, 1, 2, 3), vec![0.3, -1.2, 4.0, 2.2, 0.0, 1.0]);
        let (y, _) = instance_norm(&x, &[2.0], &[0.7], 1e-5).unwrap();
        let mean = y.data().iter().sum::<f32>() / 6.0;
        let std = (y.data().iter().map(|v| (v - mean).powi(2)).sum::<f32>() / 6.0).sqrt();
        assert_abs_diff_eq!(mean, 0.7, epsilon = 1e-5);
        assert_abs_diff_eq!(std, 2.0, epsilon = 1e-4);
    }

    #[test]
    fn upsample_replicates_quadrants() {
        let x = t(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]);
        let y = upsample_nearest2x(&x);
        assert_eq!(
            y.data(),
            &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
        );
        assert_eq!(y.data().iter().sum::<f32>(), 4.0 * 10.0);
        let v = Tensor::scalar(0.5f32);
        assert_eq!(upsample_nearest2x(&v).data(), &[0.5; 4]);
    }

    #[test]
    fn concat_preserves_order_and_slices_back() {
        let a = t(Shape::new(2, 2, 1, 2), (0..8).map(|v| v as f32).collect());
        let b = t(Shape::new(2, 3, 1, 2), (10..22).map(|v| v as f32).collect());
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), Shape::new(2, 5, 1, 2));
        assert_eq!(c.slice_channels(0, 2).unwrap(), a);
        assert_eq!(c.slice_channels(2, 3).unwrap(), b);
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
        let bad = Tensor::<f32>::zeros(Shape::new(2, 1, 2, 2));
        assert!(concat_channels(&[&a, &bad]).is_err());
    }

    #[test]
    fn add_and_clip() {
        let x = t(Shape::new(1, 1, 1, 3), vec![1.5, -0.2, 0.37]);
        assert_eq!(clip01(&x).data(), &[1.0, 0.0, 0.37]);
        assert_eq!(add(&x, &Tensor::zeros(x.shape())).unwrap(), x);
    }
}
