//! Dilated "same" convolution against a naive loop, plus a timing of the
//! forward and backward kernels at a decoder-like width.

use std::time::Instant;

use bifurcated_seg::autodiff::Graph;
use bifurcated_seg::tensor::{conv2d, ConvSpec};
use bifurcated_seg::{Shape, Tensor};

fn naive(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, d: usize) -> Tensor<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let pad = (d * (ws.h - 1) / 2) as isize;
    Tensor::from_fn(Shape::new(xs.n, ws.n, xs.h, xs.w).unwrap(), |[n, o, y, xx]| {
        let mut acc = b.data()[o];
        for c in 0..xs.c {
            for ky in 0..ws.h {
                for kx in 0..ws.w {
                    let iy = y as isize + (ky * d) as isize - pad;
                    let ix = xx as isize + (kx * d) as isize - pad;
                    if iy >= 0 && ix >= 0 && (iy as usize) < xs.h && (ix as usize) < xs.w {
                        acc += w.at(o, c, ky, kx) * x.at(n, c, iy as usize, ix as usize);
                    }
                }
            }
        }
        acc
    })
}

fn ramp(dims: [usize; 4], k: usize) -> Tensor<f64> {
    let s = Shape::new(dims[0], dims[1], dims[2], dims[3]).unwrap();
    Tensor::from_fn(s, |[a, b, c, d]| (((a * 7 + b * 5 + c * 3 + d + k) % 11) as f64 - 5.0) / 5.0)
}

fn main() {
    for (c_in, c_out, k, d) in [(3, 4, 3, 1), (3, 4, 5, 2), (12, 8, 9, 2), (4, 20, 3, 1)] {
        let x = ramp([2, c_in, 12, 10], 0);
        let w = ramp([c_out, c_in, k, k], 1);
        let b = ramp([c_out, 1, 1, 1], 2);
        let spec = ConvSpec::same(k, d).unwrap();
        let fast = conv2d(&x, &w, &b, &spec).unwrap();
        let diff = fast.max_abs_diff(&naive(&x, &w, &b, d));
        println!("{c_in:>2} -> {c_out:>2}  {k}x{k} dilation {d}: max |fast - naive| = {diff:.1e}");
    }

    let x: Tensor<f32> = ramp([2, 32, 64, 64], 3).cast();
    let w: Tensor<f32> = ramp([32, 32, 3, 3], 4).map(|v| v * 0.05).cast();
    let b: Tensor<f32> = Tensor::zeros(Shape::new(32, 1, 1, 1).unwrap());
    let spec = ConvSpec::same(3, 1).unwrap();
    let mut g = Graph::<f32>::new();
    let (xi, wi, bi) = (g.param(x), g.param(w), g.param(b));
    let t0 = Instant::now();
    let y = g.conv2d(xi, wi, bi, spec).unwrap();
    let fwd = t0.elapsed();
    let loss = g.sum(y).unwrap();
    let t0 = Instant::now();
    g.backward(loss).unwrap();
    let bwd = t0.elapsed();
    let dw: f64 = g.grad(wi).unwrap().data().iter().map(|v| v.abs() as f64).sum();
    println!("2x32x64x64, 32 -> 32, 3x3: forward {fwd:.1?}, backward {bwd:.1?} (sum |dW| = {dw:.4e})");
}
