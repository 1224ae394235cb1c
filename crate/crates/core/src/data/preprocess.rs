//! Slice resizing and intensity normalization. Every `(n, c)` plane of the
//! input is processed independently.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const DEFAULT_SIZE: usize = 256;

fn target(t: &Tensor<f32>, out_h: usize, out_w: usize) -> Result<Shape> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Spec(format!("resize target {out_h}x{out_w} has a zero extent")));
    }
    let s = t.shape();
    Shape::new(s.n, s.c, out_h, out_w)
}

/// Source coordinate of output index `i` when the corner pixels of both grids
/// coincide.
fn corner_aligned(i: usize, n_in: usize, n_out: usize) -> f64 {
    if n_out == 1 {
        0.0
    } else {
        i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
    }
}

/// Bilinear resize with corner-aligned sampling.
pub fn resize_image(image: &Tensor<f32>, out_h: usize, out_w: usize) -> Result<Tensor<f32>> {
    let shape = target(image, out_h, out_w)?;
    let s = image.shape();
    let plane = |y: usize| {
        let sy = corner_aligned(y, s.h, out_h);
        let y0 = (sy.floor() as usize).min(s.h - 1);
        let y1 = (y0 + 1).min(s.h - 1);
        (y0, y1, sy - y0 as f64)
    };
    let rows: Vec<_> = (0..out_h).map(plane).collect();
    let cols: Vec<_> = (0..out_w)
        .map(|x| {
            let sx = corner_aligned(x, s.w, out_w);
            let x0 = (sx.floor() as usize).min(s.w - 1);
            let x1 = (x0 + 1).min(s.w - 1);
            (x0, x1, sx - x0 as f64)
        })
        .collect();
    Ok(Tensor::from_fn(shape, |[n, c, y, x]| {
        let (y0, y1, fy) = rows[y];
        let (x0, x1, fx) = cols[x];
        let p = |yy, xx| image.at(n, c, yy, xx) as f64;
        let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
        let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
        (top * (1.0 - fy) + bottom * fy) as f32
    }))
}

/// Nearest-neighbour resize on pixel centres; the mask must be binary.
pub fn resize_mask(mask: &Tensor<f32>, out_h: usize, out_w: usize) -> Result<Tensor<f32>> {
    if let Some(v) = mask.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::Data(format!("mask value {v} is not 0 or 1")));
    }
    let shape = target(mask, out_h, out_w)?;
    let s = mask.shape();
    let near = |i: usize, n_in: usize, n_out: usize| {
        (((i as f64 + 0.5) * n_in as f64 / n_out as f64) as usize).min(n_in - 1)
    };
    Ok(Tensor::from_fn(shape, |[n, c, y, x]| {
        mask.at(n, c, near(y, s.h, out_h), near(x, s.w, out_w))
    }))
}

/// Min-max scaling of the whole tensor to `[0, 1]`; a constant input maps to
/// zeros.
pub fn normalize_intensity(volume: &Tensor<f32>) -> Result<Tensor<f32>> {
    if let Some(v) = volume.data().iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("intensity {v} is not finite")));
    }
    let (lo, hi) = volume
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo == hi {
        return Ok(volume.map(|_| 0.0));
    }
    let (lo, range) = (lo as f64, hi as f64 - lo as f64);
    Ok(volume.map(|v| ((v as f64 - lo) / range) as f32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(h: usize, w: usize, f: impl Fn(usize, usize) -> f32) -> Tensor<f32> {
        Tensor::from_fn(Shape::new(1, 1, h, w).unwrap(), |[_, _, y, x]| f(y, x))
    }

    #[test]
    fn same_size_is_identity() {
        let img = grid(256, 256, |y, x| ((y * 31 + x * 17) % 101) as f32 / 100.0);
        assert!(resize_image(&img, 256, 256).unwrap().bitwise_eq(&img));
        let mask = img.map(|v| (v > 0.5) as u8 as f32);
        assert!(resize_mask(&mask, 256, 256).unwrap().bitwise_eq(&mask));
    }

    #[test]
    fn constants_stay_constant() {
        let img = grid(5, 7, |_, _| 0.37);
        let out = resize_image(&img, 13, 3).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.37).abs() < 1e-7));
    }

    // Corner-aligned 2x2 -> 4x4: sample points sit at 0, 1/3, 2/3, 1 and the
    // bilinear surface of (0 1; 1 0) is u + v - 2uv.
    #[test]
    fn two_by_two_checkerboard_oracle() {
        let img = grid(2, 2, |y, x| ((y + x) % 2) as f32);
        let out = resize_image(&img, 4, 4).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let (v, u) = (y as f64 / 3.0, x as f64 / 3.0);
                let expected = u + v - 2.0 * u * v;
                assert!((out.at(0, 0, y, x) as f64 - expected).abs() < 1e-6, "({y},{x})");
            }
        }
        assert_eq!(out.at(0, 0, 0, 0), 0.0);
        assert_eq!(out.at(0, 0, 0, 3), 1.0);
    }

    #[test]
    fn errors() {
        let img = grid(4, 4, |_, _| 0.0);
        assert!(matches!(resize_image(&img, 0, 4), Err(Error::Spec(_))));
        assert!(matches!(resize_mask(&img, 4, 0), Err(Error::Spec(_))));
        let frac = grid(2, 2, |_, _| 0.5);
        assert!(matches!(resize_mask(&frac, 4, 4), Err(Error::Data(_))));
        let nan = grid(2, 2, |y, _| if y == 0 { f32::NAN } else { 0.0 });
        assert!(matches!(normalize_intensity(&nan), Err(Error::Data(_))));
    }

    #[test]
    fn normalization_examples() {
        let ct = grid(1, 3, |_, x| [-1000.0, 0.0, 400.0][x]);
        let n = normalize_intensity(&ct).unwrap();
        assert_eq!(n.data()[0], 0.0);
        assert_eq!(n.data()[2], 1.0);
        assert!((n.data()[1] - 1000.0 / 1400.0).abs() < 1e-7);
        let flat = grid(3, 3, |_, _| 42.0);
        assert!(normalize_intensity(&flat).unwrap().data().iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn normalized_extremes_are_exact(v in prop::collection::vec(-5000.0f32..5000.0, 2..64)) {
            prop_assume!(v.iter().any(|&x| x != v[0]));
            let n = v.len();
            let t = Tensor::new([1, 1, 1, n], v).unwrap();
            let out = normalize_intensity(&t).unwrap();
            let lo = out.data().iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = out.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            prop_assert_eq!(lo, 0.0);
            prop_assert_eq!(hi, 1.0);
        }

        #[test]
        fn resized_masks_stay_binary(bits in prop::collection::vec(any::<bool>(), 36),
                                     oh in 1usize..20, ow in 1usize..20) {
            let m = Tensor::new([1, 1, 6, 6], bits.iter().map(|&b| b as u8 as f32).collect()).unwrap();
            let r = resize_mask(&m, oh, ow).unwrap();
            prop_assert!(r.data().iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }
}
