//! Seeded synthetic chest slices for desk-scale runs.
//!
//! Each slice has a dark noisy background, two bright elliptical lungs and
//! zero to three blobs of intermediate intensity clipped to the lungs.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sample::SliceSample;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const MIN_PHANTOM_SIZE: usize = 8;

const BACKGROUND: f32 = 0.05;
const LUNG: f32 = 0.8;
const INFECTION: f32 = 0.45;
const NOISE: f32 = 0.03;

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
}

impl Ellipse {
    fn contains(&self, y: f64, x: f64) -> bool {
        let (dy, dx) = ((y - self.cy) / self.ry, (x - self.cx) / self.rx);
        dy * dy + dx * dx <= 1.0
    }
}

/// `count` phantoms of `size`×`size`. Sample `i` depends only on `(seed, i)`.
pub fn synth_phantom(count: usize, size: usize, seed: u64) -> Result<Vec<SliceSample>> {
    if count == 0 {
        return Err(Error::Spec("phantom count must be >= 1".into()));
    }
    if size < MIN_PHANTOM_SIZE {
        return Err(Error::Spec(format!(
            "phantom size must be >= {MIN_PHANTOM_SIZE}, got {size}"
        )));
    }
    (0..count).map(|i| phantom(size, seed, i as u64)).collect()
}

fn phantom(size: usize, seed: u64, index: u64) -> Result<SliceSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let s = size as f64;
    let mut jitter = |lo: f64, hi: f64| rng.gen_range(lo..hi) * s;

    let cy = jitter(0.46, 0.54);
    let lungs = [(0.30, 0.36), (0.64, 0.70)].map(|(lo, hi)| Ellipse {
        cy: cy + jitter(-0.02, 0.02),
        cx: jitter(lo, hi),
        ry: jitter(0.26, 0.34),
        rx: jitter(0.12, 0.16),
    });

    let n_blobs = rng.gen_range(0..=3usize);
    let blobs: Vec<Ellipse> = (0..n_blobs)
        .map(|_| {
            let lung = lungs[rng.gen_range(0..2usize)];
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = 0.45 * rng.gen_range(0.0f64..1.0).sqrt();
            Ellipse {
                cy: lung.cy + r * theta.sin() * lung.ry,
                cx: lung.cx + r * theta.cos() * lung.rx,
                ry: rng.gen_range(0.05..0.09) * s,
                rx: rng.gen_range(0.05..0.09) * s,
            }
        })
        .collect();

    let shape = Shape::new(1, 1, size, size)?;
    let mut image = Vec::with_capacity(size * size);
    let mut lung_mask = Vec::with_capacity(size * size);
    let mut infection = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
            let in_lung = lungs.iter().any(|e| e.contains(py, px));
            let infected = in_lung && blobs.iter().any(|b| b.contains(py, px));
            let base = if infected {
                INFECTION
            } else if in_lung {
                LUNG
            } else {
                BACKGROUND
            };
            let noise = rng.gen_range(-NOISE..NOISE);
            image.push((base + noise).clamp(0.0, 1.0));
            lung_mask.push(in_lung as u8 as f32);
            infection.push(infected as u8 as f32);
        }
    }
    SliceSample::new(
        Tensor::from_vec(shape, image)?,
        Tensor::from_vec(shape, lung_mask)?,
        Tensor::from_vec(shape, infection)?,
        format!("phantom-{index:04}"),
    )
}
