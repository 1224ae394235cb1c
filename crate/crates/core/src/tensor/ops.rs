//! Forward kernels and their adjoints.
//!
//! Convolution is lowered to im2col + GEMM per batch item. Everything runs
//! on the calling thread in a fixed order, so identical inputs give
//! bitwise-identical outputs.

use super::direct::Planes;
use super::{Element, Shape, Tensor};
use crate::error::{Error, Result};

/// Kernel geometry of a 2-D convolution with "same"-style padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub dilation: usize,
}

impl ConvSpec {
    pub fn new(kh: usize, kw: usize, stride: usize, dilation: usize) -> Result<Self> {
        if kh == 0 || kw == 0 || kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Spec(format!(
                "convolution kernels must be odd and positive, got {kh}x{kw}"
            )));
        }
        if stride == 0 {
            return Err(Error::Spec("convolution stride must be >= 1".into()));
        }
        if dilation == 0 {
            return Err(Error::Spec("convolution dilation must be >= 1".into()));
        }
        Ok(ConvSpec {
            kh,
            kw,
            stride,
            dilation,
        })
    }

    /// Square kernel, stride 1.
    pub fn same(k: usize, dilation: usize) -> Result<Self> {
        Self::new(k, k, 1, dilation)
    }

    /// `dilation * (k - 1) / 2` per axis.
    pub fn padding(&self) -> (usize, usize) {
        (
            self.dilation * (self.kh - 1) / 2,
            self.dilation * (self.kw - 1) / 2,
        )
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (ph, pw) = self.padding();
        let span_h = self.dilation * (self.kh - 1) + 1;
        let span_w = self.dilation * (self.kw - 1) + 1;
        if h + 2 * ph < span_h || w + 2 * pw < span_w {
            return Err(Error::Shape(format!(
                "input {h}x{w} too small for dilated kernel span {span_h}x{span_w}"
            )));
        }
        Ok((
            (h + 2 * ph - span_h) / self.stride + 1,
            (w + 2 * pw - span_w) / self.stride + 1,
        ))
    }
}

#[derive(Clone, Copy)]
struct ConvGeometry {
    c_in: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    spec: ConvSpec,
}

impl ConvGeometry {
    fn k(&self) -> usize {
        self.c_in * self.spec.kh * self.spec.kw
    }

    fn p(&self) -> usize {
        self.oh * self.ow
    }

    /// A 1x1 stride-1 convolution reads the input plane directly.
    fn is_pointwise(&self) -> bool {
        self.spec.kh == 1 && self.spec.kw == 1 && self.spec.stride == 1
    }

    /// Layers with at most this many channel pairs use the direct kernel.
    const DIRECT_MAX_PAIRS: usize = 256;

    fn direct(&self, c_out: usize) -> Option<Planes> {
        let s = &self.spec;
        let odd = s.kh % 2 == 1 && s.kw % 2 == 1;
        (s.stride == 1 && odd && !self.is_pointwise() && self.c_in * c_out <= Self::DIRECT_MAX_PAIRS)
            .then(|| Planes::new(self.c_in, c_out, self.h, self.w, s.kh, s.kw, s.dilation))
    }

    fn im2col<T: Element>(&self, image: &[T], cols: &mut [T]) {
        let (ph, pw) = self.spec.padding();
        let (s, d) = (self.spec.stride, self.spec.dilation);
        let p = self.p();
        let mut row = 0;
        for ci in 0..self.c_in {
            let plane = &image[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.spec.kh {
                for kj in 0..self.spec.kw {
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let out_row = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        let iy = (oy * s + ki * d) as isize - ph as isize;
                        if iy < 0 || iy >= self.h as isize {
                            out_row.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        let shift = (kj * d) as isize - pw as isize;
                        if s == 1 {
                            // valid ox satisfy 0 <= ox + shift < w
                            let lo = (-shift).clamp(0, self.ow as isize) as usize;
                            let hi = (self.w as isize - shift).clamp(0, self.ow as isize) as usize;
                            out_row[..lo].fill(T::zero());
                            if hi > lo {
                                let start = (lo as isize + shift) as usize;
                                out_row[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
                            }
                            out_row[hi.max(lo)..].fill(T::zero());
                        } else {
                            for (ox, v) in out_row.iter_mut().enumerate() {
                                let ix = (ox * s) as isize + shift;
                                *v = if ix < 0 || ix >= self.w as isize {
                                    T::zero()
                                } else {
                                    src[ix as usize]
                                };
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Adjoint of [`im2col`](Self::im2col): scatter-add columns back into the image.
    fn col2im<T: Element>(&self, cols: &[T], image: &mut [T]) {
        let (ph, pw) = self.spec.padding();
        let (s, d) = (self.spec.stride, self.spec.dilation);
        let p = self.p();
        let mut row = 0;
        for ci in 0..self.c_in {
            let plane = &mut image[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.spec.kh {
                for kj in 0..self.spec.kw {
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let iy = (oy * s + ki * d) as isize - ph as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        let col_row = &src[oy * self.ow..(oy + 1) * self.ow];
                        let shift = (kj * d) as isize - pw as isize;
                        for (ox, &g) in col_row.iter().enumerate() {
                            let ix = (ox * s) as isize + shift;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] = dst[ix as usize] + g;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn conv_geometry<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<ConvGeometry> {
    let is = input.shape();
    let ws = weight.shape();
    if ws.c != is.c {
        return Err(Error::Shape(format!(
            "conv2d weight expects {} input channels, input has {}",
            ws.c, is.c
        )));
    }
    if (ws.h, ws.w) != (spec.kh, spec.kw) {
        return Err(Error::Shape(format!(
            "conv2d weight kernel {}x{} disagrees with spec {}x{}",
            ws.h, ws.w, spec.kh, spec.kw
        )));
    }
    if let Some(b) = bias {
        if b.numel() != ws.n {
            return Err(Error::Shape(format!(
                "conv2d bias has {} entries for {} output channels",
                b.numel(),
                ws.n
            )));
        }
    }
    ConvSpec::new(spec.kh, spec.kw, spec.stride, spec.dilation)?;
    let (oh, ow) = spec.output_hw(is.h, is.w)?;
    Ok(ConvGeometry {
        c_in: is.c,
        h: is.h,
        w: is.w,
        oh,
        ow,
        spec: *spec,
    })
}

/// 2-D cross-correlation with zero padding `dilation * (k - 1) / 2`.
///
/// `weight` is `(c_out, c_in, kh, kw)`; `bias` holds `c_out` values.
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let g = conv_geometry(input, weight, Some(bias), spec)?;
    let is = input.shape();
    let c_out = weight.shape().n;
    let (k, p) = (g.k(), g.p());
    let out_shape = Shape::new(is.n, c_out, g.oh, g.ow)?;
    let mut out = vec![T::zero(); out_shape.numel()];
    let item = is.c * is.h * is.w;
    if let Some(planes) = g.direct(c_out) {
        let mut padded = vec![T::zero(); planes.padded_len()];
        let mut acc = vec![T::zero(); g.h * (g.w + 2 * spec.padding().1)];
        for n in 0..is.n {
            planes.pad(&input.data()[n * item..(n + 1) * item], &mut padded);
            let dst = &mut out[n * c_out * p..(n + 1) * c_out * p];
            planes.forward(&padded, weight.data(), bias.data(), dst, &mut acc);
        }
        return Tensor::from_vec(out_shape, out);
    }
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); k * p]
    };
    for n in 0..is.n {
        let image = &input.data()[n * item..(n + 1) * item];
        let b_ptr = if g.is_pointwise() {
            image.as_ptr()
        } else {
            g.im2col(image, &mut cols);
            cols.as_ptr()
        };
        let dst = &mut out[n * c_out * p..(n + 1) * c_out * p];
        // SAFETY: weight is c_out×k row-major, b_ptr is k×p row-major, dst is c_out×p.
        unsafe {
            T::gemm(
                c_out,
                k,
                p,
                T::one(),
                weight.data().as_ptr(),
                k as isize,
                1,
                b_ptr,
                p as isize,
                1,
                T::zero(),
                dst.as_mut_ptr(),
                p as isize,
                1,
            );
        }
        for (co, plane) in dst.chunks_exact_mut(p).enumerate() {
            let b = bias.data()[co];
            for v in plane {
                *v = *v + b;
            }
        }
    }
    Tensor::from_vec(out_shape, out)
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub(crate) struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub(crate) fn conv2d_backward<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    spec: &ConvSpec,
    grad_out: &Tensor<T>,
    want_input: bool,
) -> Result<ConvGrads<T>> {
    let g = conv_geometry(input, weight, None, spec)?;
    let is = input.shape();
    let ws = weight.shape();
    let c_out = ws.n;
    let (k, p) = (g.k(), g.p());
    if grad_out.shape() != Shape::new(is.n, c_out, g.oh, g.ow)? {
        return Err(Error::Shape(format!(
            "conv2d gradient shape {} does not match output",
            grad_out.shape()
        )));
    }
    let mut gw = vec![T::zero(); ws.numel()];
    let mut gb = vec![T::zero(); c_out];
    let mut gin = if want_input {
        Some(vec![T::zero(); is.numel()])
    } else {
        None
    };
    let item = is.c * is.h * is.w;
    if let Some(planes) = g.direct(c_out) {
        let mut padded = vec![T::zero(); planes.padded_len()];
        let mut gpad = vec![T::zero(); planes.padded_len()];
        let mut wide = vec![T::zero(); c_out * g.h * (g.w + 2 * spec.padding().1)];
        for n in 0..is.n {
            planes.pad(&input.data()[n * item..(n + 1) * item], &mut padded);
            let gout = &grad_out.data()[n * c_out * p..(n + 1) * c_out * p];
            for (co, plane) in gout.chunks_exact(p).enumerate() {
                gb[co] = plane.iter().fold(gb[co], |acc, &v| acc + v);
            }
            planes.widen(gout, &mut wide);
            planes.weight_grad(&padded, &wide, &mut gw);
            if let Some(gin) = gin.as_mut() {
                gpad.fill(T::zero());
                planes.input_grad(weight.data(), &wide, &mut gpad);
                planes.crop_add(&gpad, &mut gin[n * item..(n + 1) * item]);
            }
        }
        return Ok(ConvGrads {
            input: gin.map(|d| Tensor::from_vec(is, d)).transpose()?,
            weight: Tensor::from_vec(ws, gw)?,
            bias: Tensor::new([c_out, 1, 1, 1], gb)?,
        });
    }
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); k * p]
    };
    let transposed = want_input.then(|| TransposedGrad::new(&g, weight)).flatten();
    let mut dcols = if want_input {
        vec![T::zero(); transposed.as_ref().map_or(k * p, |t| t.k * p)]
    } else {
        Vec::new()
    };
    for n in 0..is.n {
        let image = &input.data()[n * item..(n + 1) * item];
        let gout = &grad_out.data()[n * c_out * p..(n + 1) * c_out * p];
        let cols_ptr = if g.is_pointwise() {
            image.as_ptr()
        } else {
            g.im2col(image, &mut cols);
            cols.as_ptr()
        };
        // SAFETY: gout is c_out×p; cols^T is read as p×k via swapped strides; gw is c_out×k.
        unsafe {
            T::gemm(
                c_out,
                p,
                k,
                T::one(),
                gout.as_ptr(),
                p as isize,
                1,
                cols_ptr,
                1,
                p as isize,
                T::one(),
                gw.as_mut_ptr(),
                k as isize,
                1,
            );
        }
        for (co, plane) in gout.chunks_exact(p).enumerate() {
            gb[co] = plane.iter().fold(gb[co], |acc, &v| acc + v);
        }
        if let (Some(gin), Some(t)) = (gin.as_mut(), transposed.as_ref()) {
            t.geometry.im2col(gout, &mut dcols);
            let dst = &mut gin[n * item..(n + 1) * item];
            // SAFETY: flipped weight is c_in×tk, dcols is tk×p, dst is c_in×p.
            unsafe {
                T::gemm(
                    g.c_in,
                    t.k,
                    p,
                    T::one(),
                    t.weight.as_ptr(),
                    t.k as isize,
                    1,
                    dcols.as_ptr(),
                    p as isize,
                    1,
                    T::one(),
                    dst.as_mut_ptr(),
                    p as isize,
                    1,
                );
            }
        } else if let Some(gin) = gin.as_mut() {
            // SAFETY: weight^T is k×c_out via swapped strides; gout is c_out×p; dcols is k×p.
            unsafe {
                T::gemm(
                    k,
                    c_out,
                    p,
                    T::one(),
                    weight.data().as_ptr(),
                    1,
                    k as isize,
                    gout.as_ptr(),
                    p as isize,
                    1,
                    T::zero(),
                    dcols.as_mut_ptr(),
                    p as isize,
                    1,
                );
            }
            let dst = &mut gin[n * item..(n + 1) * item];
            if g.is_pointwise() {
                for (d, &v) in dst.iter_mut().zip(&dcols) {
                    *d = *d + v;
                }
            } else {
                g.col2im(&dcols, dst);
            }
        }
    }
    Ok(ConvGrads {
        input: gin.map(|d| Tensor::from_vec(is, d)).transpose()?,
        weight: Tensor::from_vec(ws, gw)?,
        bias: Tensor::new([c_out, 1, 1, 1], gb)?,
    })
}

/// Input gradient of a stride-1 same convolution as a forward convolution
/// of the output gradient with the flipped, channel-transposed kernel. Used
/// when the output has fewer channels than the input, where it needs a
/// smaller column buffer than the im2col adjoint.
struct TransposedGrad<T> {
    geometry: ConvGeometry,
    weight: Vec<T>,
    k: usize,
}

impl<T: Element> TransposedGrad<T> {
    fn new(g: &ConvGeometry, weight: &Tensor<T>) -> Option<Self> {
        let ws = weight.shape();
        let (kh, kw) = (g.spec.kh, g.spec.kw);
        let same = g.spec.stride == 1 && kh % 2 == 1 && kw % 2 == 1 && (g.oh, g.ow) == (g.h, g.w);
        if !same || g.is_pointwise() || ws.n >= ws.c {
            return None;
        }
        let (c_out, c_in) = (ws.n, ws.c);
        let k = c_out * kh * kw;
        let mut flipped = vec![T::zero(); c_in * k];
        for co in 0..c_out {
            for ci in 0..c_in {
                for ky in 0..kh {
                    for kx in 0..kw {
                        flipped[ci * k + (co * kh + kh - 1 - ky) * kw + kw - 1 - kx] =
                            weight.at(co, ci, ky, kx);
                    }
                }
            }
        }
        Some(TransposedGrad {
            geometry: ConvGeometry { c_in: c_out, ..*g },
            weight: flipped,
            k,
        })
    }
}

struct PoolGeometry {
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

fn pool_geometry(shape: Shape, k: usize, stride: usize, same_padding: bool) -> Result<PoolGeometry> {
    if k == 0 || stride == 0 {
        return Err(Error::Spec(format!(
            "max-pool window and stride must be >= 1, got k={k} stride={stride}"
        )));
    }
    if same_padding && stride != 1 {
        return Err(Error::Spec(
            "same-padded max-pool is only defined for stride 1".into(),
        ));
    }
    let pad = if same_padding { (k - 1) / 2 } else { 0 };
    let extra = if same_padding { k - 1 - pad } else { 0 };
    let (ph, pw) = (shape.h + pad + extra, shape.w + pad + extra);
    if k > ph || k > pw {
        return Err(Error::Shape(format!(
            "max-pool window {k} larger than padded extent {ph}x{pw}"
        )));
    }
    Ok(PoolGeometry {
        k,
        stride,
        pad,
        oh: (ph - k) / stride + 1,
        ow: (pw - k) / stride + 1,
    })
}

/// Max-pool; returns the output and, per output element, the flat index of
/// the winning input element within its `(h, w)` plane.
pub(crate) fn maxpool2d_with_argmax<T: Element>(
    input: &Tensor<T>,
    k: usize,
    stride: usize,
    same_padding: bool,
) -> Result<(Tensor<T>, Vec<u32>)> {
    let s = input.shape();
    let g = pool_geometry(s, k, stride, same_padding)?;
    let out_shape = Shape::new(s.n, s.c, g.oh, g.ow)?;
    let mut out = Vec::with_capacity(out_shape.numel());
    let mut arg = Vec::with_capacity(out_shape.numel());
    for plane in input.data().chunks_exact(s.plane()) {
        for oy in 0..g.oh {
            let y0 = (oy * g.stride) as isize - g.pad as isize;
            let ys = y0.max(0) as usize..((y0 + g.k as isize).min(s.h as isize)) as usize;
            for ox in 0..g.ow {
                let x0 = (ox * g.stride) as isize - g.pad as isize;
                let xs = x0.max(0) as usize..((x0 + g.k as isize).min(s.w as isize)) as usize;
                // Padding is -inf: it never wins, so skipping it is equivalent.
                let mut best = T::neg_infinity();
                let mut best_idx = 0usize;
                for y in ys.clone() {
                    for x in xs.clone() {
                        let v = plane[y * s.w + x];
                        if v > best {
                            best = v;
                            best_idx = y * s.w + x;
                        }
                    }
                }
                out.push(best);
                arg.push(best_idx as u32);
            }
        }
    }
    Ok((Tensor::from_vec(out_shape, out)?, arg))
}

/// Max-pool with window `k`. With `same_padding` (stride 1 only) the
/// spatial size is preserved and out-of-bounds positions act as `-inf`.
pub fn maxpool2d<T: Element>(
    input: &Tensor<T>,
    k: usize,
    stride: usize,
    same_padding: bool,
) -> Result<Tensor<T>> {
    maxpool2d_with_argmax(input, k, stride, same_padding).map(|(t, _)| t)
}

pub(crate) fn maxpool2d_backward<T: Element>(
    input_shape: Shape,
    out_shape: Shape,
    argmax: &[u32],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let mut gin = vec![T::zero(); input_shape.numel()];
    let (ip, op) = (input_shape.plane(), out_shape.plane());
    for (plane_idx, (gplane, aplane)) in grad_out
        .data()
        .chunks_exact(op)
        .zip(argmax.chunks_exact(op))
        .enumerate()
    {
        let base = plane_idx * ip;
        for (&g, &a) in gplane.iter().zip(aplane) {
            let slot = &mut gin[base + a as usize];
            *slot = *slot + g;
        }
    }
    Tensor::from_vec(input_shape, gin)
}

/// Nearest-neighbour upsampling by an integer factor.
pub fn upsample_nearest<T: Element>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor == 0 {
        return Err(Error::Spec("upsample factor must be >= 1".into()));
    }
    let s = input.shape();
    let out_shape = Shape::new(s.n, s.c, s.h * factor, s.w * factor)?;
    let mut out = Vec::with_capacity(out_shape.numel());
    for plane in input.data().chunks_exact(s.plane()) {
        for y in 0..out_shape.h {
            let row = &plane[(y / factor) * s.w..(y / factor + 1) * s.w];
            for x in 0..out_shape.w {
                out.push(row[x / factor]);
            }
        }
    }
    Tensor::from_vec(out_shape, out)
}

pub(crate) fn upsample_nearest_backward<T: Element>(
    input_shape: Shape,
    factor: usize,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let os = grad_out.shape();
    let mut gin = vec![T::zero(); input_shape.numel()];
    for (gplane, dst) in grad_out
        .data()
        .chunks_exact(os.plane())
        .zip(gin.chunks_exact_mut(input_shape.plane()))
    {
        for y in 0..os.h {
            for x in 0..os.w {
                let slot = &mut dst[(y / factor) * input_shape.w + x / factor];
                *slot = *slot + gplane[y * os.w + x];
            }
        }
    }
    Tensor::from_vec(input_shape, gin)
}

/// Concatenate along the channel axis, preserving part order.
pub fn concat_channels<T: Element>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Spec("concat_channels needs at least one part".into()))?
        .shape();
    let mut c = 0;
    for p in parts {
        let s = p.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(Error::Shape(format!(
                "concat_channels: part {s} does not match {first} in batch/spatial extents"
            )));
        }
        c += s.c;
    }
    let out_shape = Shape::new(first.n, c, first.h, first.w)?;
    let mut out = Vec::with_capacity(out_shape.numel());
    for n in 0..first.n {
        for p in parts {
            let item = p.shape().c * first.plane();
            out.extend_from_slice(&p.data()[n * item..(n + 1) * item]);
        }
    }
    Tensor::from_vec(out_shape, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseKind {
    Add,
    Mul,
    Relu,
    Sigmoid,
}

impl ElementwiseKind {
    pub fn is_binary(self) -> bool {
        matches!(self, ElementwiseKind::Add | ElementwiseKind::Mul)
    }
}

pub(crate) fn sigmoid_scalar<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Whether `b` is `a`'s shape or its single-channel broadcast.
pub(crate) fn check_broadcast(a: Shape, b: Shape) -> Result<bool> {
    if a == b {
        Ok(false)
    } else if b.c == 1 && (a.n, a.h, a.w) == (b.n, b.h, b.w) {
        Ok(true)
    } else {
        Err(Error::Shape(format!(
            "operand {b} is neither equal to nor a channel broadcast of {a}"
        )))
    }
}

/// Pointwise add / mul / relu / sigmoid. Binary kinds accept `b` either of
/// the same shape as `a` or with one channel, broadcast across `a`'s channels.
pub fn elementwise<T: Element>(
    kind: ElementwiseKind,
    a: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    match (kind.is_binary(), b) {
        (true, None) => Err(Error::Spec(format!("{kind:?} needs two operands"))),
        (false, Some(_)) => Err(Error::Spec(format!("{kind:?} takes a single operand"))),
        (false, None) => Ok(match kind {
            ElementwiseKind::Relu => a.map(|x| x.max(T::zero())),
            _ => a.map(sigmoid_scalar),
        }),
        (true, Some(b)) => {
            let s = a.shape();
            check_broadcast(s, b.shape())?;
            let plane = s.plane();
            let mut out = Vec::with_capacity(a.numel());
            for (i, &x) in a.data().iter().enumerate() {
                let j = if b.shape() == s {
                    i
                } else {
                    (i / (s.c * plane)) * plane + i % plane
                };
                let y = b.data()[j];
                out.push(match kind {
                    ElementwiseKind::Add => x + y,
                    _ => x * y,
                });
            }
            Tensor::from_vec(s, out)
        }
    }
}
