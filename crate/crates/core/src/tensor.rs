//! Dense rank-4 `f32` tensors and the handful of kernels the model needs.
//!
//! Layout is always contiguous row-major `(n, c, h, w)`. Every kernel is a
//! pure function of its inputs. Accumulation order is fixed by the loop
//! structure (mostly `f32`; pooling sums in `f64`), so results are
//! bit-reproducible.

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TensorError {
    #[error("data length {got} does not match shape {shape:?} ({expected} elements)")]
    LengthMismatch {
        shape: [usize; 4],
        expected: usize,
        got: usize,
    },
    #[error("channel mismatch: input has {input} channels, kernel expects {kernel}")]
    ChannelMismatch { input: usize, kernel: usize },
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch([usize; 4], [usize; 4]),
    #[error("output dimension would be non-positive (input {input}, kernel {kernel}, pad {pad})")]
    EmptyOutput {
        input: usize,
        kernel: usize,
        pad: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let expected = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::LengthMismatch {
                shape,
                expected,
                got: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: [usize; 4], value: f32) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    /// Builds a tensor by evaluating `f(n, c, y, x)` at every position.
    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let [n, c, h, w] = shape;
        let mut data = Vec::with_capacity(n * c * h * w);
        for ni in 0..n {
            for ci in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(ni, ci, y, x));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn n(&self) -> usize {
        self.shape[0]
    }

    pub fn c(&self) -> usize {
        self.shape[1]
    }

    pub fn h(&self) -> usize {
        self.shape[2]
    }

    pub fn w(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, cs, hs, ws] = self.shape;
        ((n * cs + c) * hs + y) * ws + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.offset(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, value: f32) {
        let off = self.offset(n, c, y, x);
        self.data[off] = value;
    }

    /// The `(h, w)` plane for batch `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch(self.shape, other.shape));
        }
        Ok(Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, factor: f32) -> Tensor {
        self.map(|v| v * factor)
    }

    /// Channels `[start, start + count)` as a new tensor.
    pub fn narrow_channels(&self, start: usize, count: usize) -> Result<Tensor> {
        let [n, c, h, w] = self.shape;
        if start + count > c {
            return Err(TensorError::InvalidArgument("channel range out of bounds"));
        }
        let hw = h * w;
        let mut data = Vec::with_capacity(n * count * hw);
        for ni in 0..n {
            let base = (ni * c + start) * hw;
            data.extend_from_slice(&self.data[base..base + count * hw]);
        }
        Tensor::new([n, count, h, w], data)
    }

    /// Crops the spatial window `[0, h) x [0, w)`.
    pub fn crop(&self, h: usize, w: usize) -> Result<Tensor> {
        let [n, c, hs, ws] = self.shape;
        if h > hs || w > ws {
            return Err(TensorError::InvalidArgument("crop larger than tensor"));
        }
        Ok(Tensor::from_fn([n, c, h, w], |ni, ci, y, x| self.at(ni, ci, y, x)))
    }
}

/// Concatenates tensors along the channel axis. All inputs must agree on
/// `n`, `h` and `w`.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or(TensorError::InvalidArgument("concat of zero tensors"))?;
    let [n, _, h, w] = first.shape;
    let mut total_c = 0;
    for p in parts {
        if p.n() != n || p.h() != h || p.w() != w {
            return Err(TensorError::ShapeMismatch(first.shape, p.shape));
        }
        total_c += p.c();
    }
    let hw = h * w;
    let mut data = Vec::with_capacity(n * total_c * hw);
    for ni in 0..n {
        for p in parts {
            let base = ni * p.c() * hw;
            data.extend_from_slice(&p.data[base..base + p.c() * hw]);
        }
    }
    Tensor::new([n, total_c, h, w], data)
}

/// Direct 2-D convolution, cross-correlation convention, zero padding.
///
/// `kernel` is `(co, ci, kh, kw)` and `bias` has `co` entries.
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: &[f32], stride: usize, pad: usize) -> Result<Tensor> {
    let [n, ci, h, w] = input.shape;
    let [co, kci, kh, kw] = kernel.shape;
    if kci != ci {
        return Err(TensorError::ChannelMismatch {
            input: ci,
            kernel: kci,
        });
    }
    if bias.len() != co {
        return Err(TensorError::InvalidArgument("bias length must equal output channels"));
    }
    if stride == 0 {
        return Err(TensorError::InvalidArgument("stride must be >= 1"));
    }
    if h + 2 * pad < kh || kh == 0 {
        return Err(TensorError::EmptyOutput {
            input: h,
            kernel: kh,
            pad,
        });
    }
    if w + 2 * pad < kw || kw == 0 {
        return Err(TensorError::EmptyOutput {
            input: w,
            kernel: kw,
            pad,
        });
    }
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let ohw = oh * ow;
    let mut out = vec![0.0f32; n * co * ohw];

    // Valid output range along one axis for a given kernel tap.
    let valid = |k: usize, len: usize, olen: usize| -> (usize, usize) {
        // input index = o * stride + k - pad, must be in [0, len)
        let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
        let hi = if len + pad > k {
            ((len + pad - k - 1) / stride + 1).min(olen)
        } else {
            0
        };
        (lo, hi.max(lo))
    };

    out.par_chunks_mut(ohw).enumerate().for_each(|(plane, dst)| {
        let ni = plane / co;
        let o = plane % co;
        dst.fill(bias[o]);
        for c in 0..ci {
            let src = input.plane(ni, c);
            for ky in 0..kh {
                let (y_lo, y_hi) = valid(ky, h, oh);
                for kx in 0..kw {
                    let wv = kernel.data[((o * ci + c) * kh + ky) * kw + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (x_lo, x_hi) = valid(kx, w, ow);
                    if x_lo >= x_hi {
                        continue;
                    }
                    for oy in y_lo..y_hi {
                        let iy = oy * stride + ky - pad;
                        let row = &src[iy * w..(iy + 1) * w];
                        let drow = &mut dst[oy * ow..(oy + 1) * ow];
                        if stride == 1 {
                            let ix0 = x_lo + kx - pad;
                            let n_x = x_hi - x_lo;
                            for (d, s) in drow[x_lo..x_hi].iter_mut().zip(&row[ix0..ix0 + n_x]) {
                                *d += wv * s;
                            }
                        } else {
                            for ox in x_lo..x_hi {
                                drow[ox] += wv * row[ox * stride + kx - pad];
                            }
                        }
                    }
                }
            }
        }
    });
    Tensor::new([n, co, oh, ow], out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f32) -> f32 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => sigmoid(v),
            Activation::Tanh => v.tanh(),
        }
    }
}

#[inline]
pub fn sigmoid(v: f32) -> f32 {
    // Split on sign so exp never overflows.
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn elementwise(input: &Tensor, act: Activation) -> Tensor {
    input.map(|v| act.apply(v))
}

/// Mean-pools the last axis by `factor`; a short tail window averages only
/// the elements it covers.
pub fn avg_pool_last(input: &Tensor, factor: usize) -> Result<Tensor> {
    if factor < 1 {
        return Err(TensorError::InvalidArgument("pool factor must be >= 1"));
    }
    let [n, c, h, w] = input.shape;
    let ow = w.div_ceil(factor);
    let mut data = Vec::with_capacity(n * c * h * ow);
    for row in input.data.chunks(w.max(1)).take(n * c * h) {
        pool_row(row, factor, &mut data);
    }
    if w == 0 {
        data.clear();
    }
    Tensor::new([n, c, h, ow], data)
}

pub(crate) fn pool_row(row: &[f32], factor: usize, out: &mut Vec<f32>) {
    // f64 accumulation keeps the mean of a constant window exact.
    for win in row.chunks(factor) {
        let mut s = 0.0f64;
        for &v in win {
            s += v as f64;
        }
        out.push((s / win.len() as f64) as f32);
    }
}

/// Linear interpolation into `row` at fractional index `x`. Bins outside
/// `[0, len)` read as zero.
#[inline]
pub fn bilinear_sample_1d(row: &[f32], x: f32) -> f32 {
    let len = row.len() as isize;
    let x0f = x.floor();
    let t = x - x0f;
    let x0 = x0f as isize;
    let x1 = x0 + 1;
    let get = |i: isize| if i >= 0 && i < len { row[i as usize] } else { 0.0 };
    if t == 0.0 {
        return get(x0);
    }
    (1.0 - t) * get(x0) + t * get(x1)
}

/// Softmax over the channel axis at each `(n, y, x)`.
pub fn softmax_channels(input: &Tensor) -> Tensor {
    let [n, c, h, w] = input.shape;
    let hw = h * w;
    let mut out = input.data.clone();
    let mut buf = vec![0.0f32; c];
    for ni in 0..n {
        for p in 0..hw {
            for (ci, b) in buf.iter_mut().enumerate() {
                *b = input.data[(ni * c + ci) * hw + p];
            }
            softmax_in_place(&mut buf);
            for (ci, b) in buf.iter().enumerate() {
                out[(ni * c + ci) * hw + p] = *b;
            }
        }
    }
    Tensor {
        shape: input.shape,
        data: out,
    }
}

pub(crate) fn softmax_in_place(v: &mut [f32]) {
    let max = v.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// 2x2 average pooling with stride 2; odd trailing rows/columns average
/// the elements they cover.
pub fn avg_pool2x(input: &Tensor) -> Tensor {
    let [n, c, h, w] = input.shape;
    let oh = h.div_ceil(2);
    let ow = w.div_ceil(2);
    Tensor::from_fn([n, c, oh, ow], |ni, ci, y, x| {
        let mut s = 0.0f32;
        let mut k = 0.0f32;
        for iy in 2 * y..(2 * y + 2).min(h) {
            for ix in 2 * x..(2 * x + 2).min(w) {
                s += input.at(ni, ci, iy, ix);
                k += 1.0;
            }
        }
        s / k
    })
}

/// Bilinear resize with corner alignment (corner samples map to corner
/// samples).
pub fn resize_bilinear(input: &Tensor, oh: usize, ow: usize) -> Tensor {
    let [n, c, h, w] = input.shape;
    let coord = |o: usize, olen: usize, len: usize| -> (usize, usize, f32) {
        if olen <= 1 || len <= 1 {
            return (0, 0, 0.0);
        }
        let src = o as f32 * (len - 1) as f32 / (olen - 1) as f32;
        let i0 = (src.floor() as usize).min(len - 1);
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, src - i0 as f32)
    };
    Tensor::from_fn([n, c, oh, ow], |ni, ci, y, x| {
        let (y0, y1, ty) = coord(y, oh, h);
        let (x0, x1, tx) = coord(x, ow, w);
        let a = input.at(ni, ci, y0, x0);
        let b = input.at(ni, ci, y0, x1);
        let cc = input.at(ni, ci, y1, x0);
        let d = input.at(ni, ci, y1, x1);
        let top = a + (b - a) * tx;
        let bot = cc + (d - cc) * tx;
        top + (bot - top) * ty
    })
}
