//! Direct stride-1 convolution for narrow layers.
//!
//! The input is zero-padded into planes of row length `wp = w + 2 * pw`.
//! For one kernel tap the contribution to a whole output plane is then a
//! single contiguous axpy over `h * wp` elements, starting at the tap's
//! offset. The `wp - w` trailing columns of every output row are garbage and
//! get cropped; in the backward pass they are zeroed so they contribute
//! nothing.

use super::element::Element;

/// Padded-plane layout shared by the forward and backward kernels.
#[derive(Debug, Clone, Copy)]
pub(super) struct Planes {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub dilation: usize,
    ph: usize,
    pw: usize,
    wp: usize,
    /// Padded plane stride, with slack so the last tap's window stays in
    /// its own plane.
    stride: usize,
}

impl Planes {
    #[allow(clippy::too_many_arguments)]
    pub fn new(c_in: usize, c_out: usize, h: usize, w: usize, kh: usize, kw: usize, dilation: usize) -> Self {
        let (ph, pw) = (dilation * (kh - 1) / 2, dilation * (kw - 1) / 2);
        let wp = w + 2 * pw;
        Planes {
            c_in,
            c_out,
            h,
            w,
            kh,
            kw,
            dilation,
            ph,
            pw,
            wp,
            stride: (h + 2 * ph) * wp + 2 * pw,
        }
    }

    fn span(&self) -> usize {
        self.h * self.wp
    }

    fn offset(&self, ky: usize, kx: usize) -> usize {
        ky * self.dilation * self.wp + kx * self.dilation
    }

    pub fn padded_len(&self) -> usize {
        self.c_in * self.stride
    }

    /// Copies a `c_in × h × w` image into `buf`, which must be zero outside
    /// the interior (it is only ever written there).
    pub fn pad<T: Element>(&self, image: &[T], buf: &mut [T]) {
        for ci in 0..self.c_in {
            for y in 0..self.h {
                let src = &image[(ci * self.h + y) * self.w..][..self.w];
                let dst = ci * self.stride + (y + self.ph) * self.wp + self.pw;
                buf[dst..dst + self.w].copy_from_slice(src);
            }
        }
    }

    /// `out` is `c_out × h × w`; `acc` is scratch of `h * wp`.
    pub fn forward<T: Element>(&self, padded: &[T], weight: &[T], bias: &[T], out: &mut [T], acc: &mut [T]) {
        let taps = self.kh * self.kw;
        let span = self.span();
        for co in 0..self.c_out {
            acc.fill(T::zero());
            for ci in 0..self.c_in {
                let wrow = &weight[(co * self.c_in + ci) * taps..][..taps];
                let plane = &padded[ci * self.stride..(ci + 1) * self.stride];
                for ky in 0..self.kh {
                    for kx in 0..self.kw {
                        let wv = wrow[ky * self.kw + kx];
                        axpy(acc, &plane[self.offset(ky, kx)..][..span], wv);
                    }
                }
            }
            let b = bias[co];
            for y in 0..self.h {
                let dst = &mut out[(co * self.h + y) * self.w..][..self.w];
                for (d, &a) in dst.iter_mut().zip(&acc[y * self.wp..]) {
                    *d = a + b;
                }
            }
        }
    }

    /// Spreads a `c_out × h × w` gradient into `c_out × h × wp` rows with
    /// zeroed garbage columns.
    pub fn widen<T: Element>(&self, grad: &[T], wide: &mut [T]) {
        wide.fill(T::zero());
        for co in 0..self.c_out {
            for y in 0..self.h {
                let src = &grad[(co * self.h + y) * self.w..][..self.w];
                let dst = (co * self.h + y) * self.wp;
                wide[dst..dst + self.w].copy_from_slice(src);
            }
        }
    }

    /// Accumulates the weight gradient into `gw` (`c_out × c_in × kh × kw`).
    pub fn weight_grad<T: Element>(&self, padded: &[T], wide: &[T], gw: &mut [T]) {
        let taps = self.kh * self.kw;
        let span = self.span();
        for co in 0..self.c_out {
            let g = &wide[co * span..(co + 1) * span];
            for ci in 0..self.c_in {
                let plane = &padded[ci * self.stride..(ci + 1) * self.stride];
                let dst = &mut gw[(co * self.c_in + ci) * taps..][..taps];
                for ky in 0..self.kh {
                    for kx in 0..self.kw {
                        let d = &mut dst[ky * self.kw + kx];
                        *d = *d + dot(g, &plane[self.offset(ky, kx)..][..span]);
                    }
                }
            }
        }
    }

    /// Input gradient in padded layout; `gpad` must start zeroed.
    pub fn input_grad<T: Element>(&self, weight: &[T], wide: &[T], gpad: &mut [T]) {
        let taps = self.kh * self.kw;
        let span = self.span();
        for ci in 0..self.c_in {
            let plane = &mut gpad[ci * self.stride..(ci + 1) * self.stride];
            for co in 0..self.c_out {
                let g = &wide[co * span..(co + 1) * span];
                let wrow = &weight[(co * self.c_in + ci) * taps..][..taps];
                for ky in 0..self.kh {
                    for kx in 0..self.kw {
                        let off = self.offset(ky, kx);
                        axpy(&mut plane[off..off + span], g, wrow[ky * self.kw + kx]);
                    }
                }
            }
        }
    }

    /// Adds the interior of a padded gradient into `gin` (`c_in × h × w`).
    pub fn crop_add<T: Element>(&self, gpad: &[T], gin: &mut [T]) {
        for ci in 0..self.c_in {
            for y in 0..self.h {
                let src = ci * self.stride + (y + self.ph) * self.wp + self.pw;
                let dst = &mut gin[(ci * self.h + y) * self.w..][..self.w];
                for (d, &s) in dst.iter_mut().zip(&gpad[src..src + self.w]) {
                    *d = *d + s;
                }
            }
        }
    }
}

// The wide variants are the same code compiled with AVX2 enabled. No fused
// multiply-add is introduced, so both paths give bitwise-identical results.
fn axpy<T: Element>(y: &mut [T], x: &[T], a: T) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        return unsafe { axpy_avx2(y, x, a) };
    }
    axpy_impl(y, x, a)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn axpy_avx2<T: Element>(y: &mut [T], x: &[T], a: T) {
    axpy_impl(y, x, a)
}

#[inline(always)]
fn axpy_impl<T: Element>(y: &mut [T], x: &[T], a: T) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

fn dot<T: Element>(a: &[T], b: &[T]) -> T {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        return unsafe { dot_avx2(a, b) };
    }
    dot_impl(a, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn dot_avx2<T: Element>(a: &[T], b: &[T]) -> T {
    dot_impl(a, b)
}

/// Eight independent partial sums, combined in fixed order.
#[inline(always)]
fn dot_impl<T: Element>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ac, bc) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        for i in 0..8 {
            acc[i] = acc[i] + x[i] * y[i];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ar.iter().zip(br) {
        tail = tail + x * y;
    }
    acc.iter().fold(tail, |s, &v| s + v)
}
