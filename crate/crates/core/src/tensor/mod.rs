//! Dense rank-4 tensors and the forward kernels built on them.
//!
//! Every feature map in the network is a [`Tensor`] in `(n, c, h, w)`
//! layout, stored row-major. The element type is generic over
//! [`Element`] so the same graph can be evaluated in 32-bit (training)
//! and 64-bit (gradient-check shadow) precision.

mod direct;
mod element;
pub mod ops;

use std::fmt;

pub use element::Element;
pub use ops::{
    concat_channels, conv2d, elementwise, maxpool2d, upsample_nearest, ConvSpec, ElementwiseKind,
};

use crate::error::{Error, Result};

/// Extents of a rank-4 tensor: batch, channels, rows, columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!(
                "all extents must be >= 1, got ({n}, {c}, {h}, {w})"
            )));
        }
        Ok(Shape { n, c, h, w })
    }

    pub const fn scalar() -> Self {
        Shape {
            n: 1,
            c: 1,
            h: 1,
            w: 1,
        }
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    /// Elements in one `(h, w)` plane.
    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Row-major `(n, c, h, w)` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::Shape(format!(
                "shape {shape} needs {} elements, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// Convenience constructor from raw extents.
    pub fn new(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3])?;
        Self::from_vec(shape, data)
    }

    pub fn full(shape: Shape, value: T) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: Shape) -> Self {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self::full(Shape::scalar(), value)
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        data.push(f([n, c, h, w]));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + h) * self.shape.w + w
    }

    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.offset(n, c, h, w)]
    }

    /// Value of a `(1, 1, 1, 1)` tensor.
    pub fn item(&self) -> Result<T> {
        if !self.shape.is_scalar() {
            return Err(Error::Shape(format!(
                "item() needs a scalar tensor, got {}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&x| U::from_f64(x.as_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Copy of channels `[start, end)`.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.shape.c {
            return Err(Error::Shape(format!(
                "channel range {start}..{end} outside {} channels",
                self.shape.c
            )));
        }
        let plane = self.shape.plane();
        let shape = Shape {
            c: end - start,
            ..self.shape
        };
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..self.shape.n {
            let base = (n * self.shape.c + start) * plane;
            data.extend_from_slice(&self.data[base..base + (end - start) * plane]);
        }
        Ok(Tensor { shape, data })
    }

    /// Copy of batch items `[start, end)`.
    pub fn slice_batch(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.shape.n {
            return Err(Error::Shape(format!(
                "batch range {start}..{end} outside {} items",
                self.shape.n
            )));
        }
        let item = self.shape.c * self.shape.plane();
        Ok(Tensor {
            shape: Shape {
                n: end - start,
                ..self.shape
            },
            data: self.data[start * item..end * item].to_vec(),
        })
    }

    /// Stack along the batch axis. All parts must agree on `(c, h, w)`.
    pub fn stack_batch(parts: &[&Tensor<T>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Spec("stack_batch needs at least one tensor".into()))?;
        let mut n = 0;
        let mut data = Vec::new();
        for p in parts {
            let s = p.shape;
            if (s.c, s.h, s.w) != (first.shape.c, first.shape.h, first.shape.w) {
                return Err(Error::Shape(format!(
                    "cannot stack {} with {}",
                    first.shape, s
                )));
            }
            n += s.n;
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor {
            shape: Shape { n, ..first.shape },
            data,
        })
    }

    /// `self += other`, shapes must match.
    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "cannot accumulate {} into {}",
                other.shape, self.shape
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|x| x.as_f64()).sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bitwise_eq(&self, other: &Tensor<T>) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits_u64() == b.to_bits_u64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_extent_rejected() {
        assert!(Shape::new(1, 0, 2, 2).is_err());
        assert!(Tensor::<f32>::new([1, 1, 2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn slice_channels_picks_contiguous_planes() {
        let t = Tensor::<f32>::from_fn(Shape::new(2, 3, 1, 2).unwrap(), |[n, c, _, w]| {
            (n * 100 + c * 10 + w) as f32
        });
        let s = t.slice_channels(1, 3).unwrap();
        assert_eq!(s.shape().dims(), [2, 2, 1, 2]);
        assert_eq!(s.data(), &[10.0, 11.0, 20.0, 21.0, 110.0, 111.0, 120.0, 121.0]);
        assert!(t.slice_channels(2, 2).is_err());
    }

    #[test]
    fn stack_then_slice_batch_recovers_parts() {
        let a = Tensor::<f32>::full(Shape::new(1, 2, 2, 2).unwrap(), 1.0);
        let b = Tensor::<f32>::full(Shape::new(1, 2, 2, 2).unwrap(), 2.0);
        let s = Tensor::stack_batch(&[&a, &b]).unwrap();
        assert_eq!(s.shape().n, 2);
        assert_eq!(s.slice_batch(1, 2).unwrap(), b);
    }

    #[test]
    fn item_requires_scalar() {
        assert_eq!(Tensor::scalar(3.0f64).item().unwrap(), 3.0);
        assert!(Tensor::<f64>::zeros(Shape::new(1, 1, 1, 2).unwrap())
            .item()
            .is_err());
    }
}
