//! Finite-difference verification of every differentiable kernel, the
//! inception block and the full model, in both precisions.
//!
//! Kernel checks run entirely in the precision under test. Inputs are
//! chosen so that no gradient component is tiny: positive data and
//! positive output weights for the linear kernels, values kept clear of
//! ReLU kinks and max-pool ties.
//!
//! The composite checks (inception block, full model) in 32-bit mode
//! compare the 32-bit analytic gradient against central differences of
//! the 64-bit shadow. Per-element sensitivities of a deep network sit near
//! the 32-bit rounding floor, so 32-bit central differences there measure
//! rounding noise rather than the gradient.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{
    analytic_gradient, compare, grad_check_at, GradCheckReport, Graph, NodeId,
    ParameterSet,
};
use crate::data::synth_phantom;
use crate::error::{Error, Result};
use crate::nn::{BifurcatedModel, InceptionBlock, InceptionConfig, ModelConfig};
use crate::tensor::{ConvSpec, Element, Shape, Tensor};

pub const F64_TOLERANCE: f64 = 1e-4;
pub const F32_TOLERANCE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteCheck {
    pub name: String,
    /// Precision of the analytic gradient.
    pub precision: &'static str,
    pub tolerance: f64,
    pub report: GradCheckReport,
}

impl SuiteCheck {
    pub fn passed(&self) -> bool {
        self.report.passes(self.tolerance)
    }
}

/// Runs every check in 64-bit shadow mode, then in 32-bit mode.
pub fn gradient_suite() -> Result<Vec<SuiteCheck>> {
    let mut f64_run = Runner::<f64> {
        _t: std::marker::PhantomData,
        smooth_eps: 1e-6,
        linear_eps: 1e-3,
        tolerance: F64_TOLERANCE,
        out: Vec::new(),
    };
    kernel_checks(&mut f64_run)?;
    let mut f32_run = Runner::<f32> {
        _t: std::marker::PhantomData,
        smooth_eps: 1e-2,
        linear_eps: 0.1,
        tolerance: F32_TOLERANCE,
        out: Vec::new(),
    };
    kernel_checks(&mut f32_run)?;
    let (composite64, composite32): (Vec<_>, Vec<_>) =
        composite_checks()?.into_iter().partition(|c| c.precision == "f64");
    let mut out = f64_run.out;
    out.extend(composite64);
    out.extend(f32_run.out);
    out.extend(composite32);
    Ok(out)
}

fn shape(d: [usize; 4]) -> Shape {
    Shape::new(d[0], d[1], d[2], d[3]).expect("suite shapes are non-empty")
}

fn uniform<T: Element>(dims: [usize; 4], lo: f64, hi: f64, seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape(dims), |_| T::from_f64(rng.gen_range(lo..hi)))
}

/// Values in `±(0.1..1)`, kept away from the ReLU kink.
fn off_zero<T: Element>(dims: [usize; 4], seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape(dims), |_| {
        let m = rng.gen_range(0.1..1.0);
        T::from_f64(if rng.gen::<bool>() { m } else { -m })
    })
}

/// A shuffled ramp with spacing 0.5, so max-pool windows have clear winners.
fn distinct<T: Element>(dims: [usize; 4], seed: u64) -> Tensor<T> {
    let shape = shape(dims);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<usize> = (0..shape.numel()).collect();
    rand::seq::SliceRandom::shuffle(v.as_mut_slice(), &mut rng);
    let data = v.into_iter().map(|i| T::from_f64(i as f64 * 0.5)).collect();
    Tensor::from_vec(shape, data).expect("numel matches")
}

/// `sum(r * y)` for a fixed `r` drawn from `[lo, hi)`.
fn weighted<T: Element>(g: &mut Graph<T>, y: NodeId, lo: f64, hi: f64, seed: u64) -> Result<NodeId> {
    let r = g.constant(uniform(g.value(y).shape().dims(), lo, hi, seed));
    let p = g.mul(y, r)?;
    g.sum(p)
}

fn positive<T: Element>(g: &mut Graph<T>, y: NodeId, seed: u64) -> Result<NodeId> {
    weighted(g, y, 0.5, 1.5, seed)
}

struct Runner<T: Element> {
    _t: std::marker::PhantomData<T>,
    /// Step for functions with curvature.
    smooth_eps: f64,
    /// Step for piecewise-linear functions, whose kinks the inputs avoid.
    linear_eps: f64,
    tolerance: f64,
    out: Vec<SuiteCheck>,
}

impl<T: Element> Runner<T> {
    fn check<F>(&mut self, name: &str, x: Tensor<T>, linear: bool, f: F) -> Result<()>
    where
        F: Fn(&mut Graph<T>, NodeId) -> Result<NodeId>,
    {
        let eps = if linear { self.linear_eps } else { self.smooth_eps };
        let all: Vec<usize> = (0..x.numel()).collect();
        let report = grad_check_at(f, &x, eps, &all)?;
        self.out.push(SuiteCheck {
            name: name.to_owned(),
            precision: T::NAME,
            tolerance: self.tolerance,
            report,
        });
        Ok(())
    }
}

fn conv_checks<T: Element>(r: &mut Runner<T>) -> Result<()> {
    // (label, c_in, c_out, k, dilation): narrow, narrowing and widening
    // layers take different kernel paths.
    let cases = [
        ("conv2d 3x3", 3, 4, 3, 1),
        ("conv2d 3x3 dilation 2", 3, 4, 3, 2),
        ("conv2d 3x3 dilation 2 narrowing", 12, 8, 3, 2),
        ("conv2d 3x3 widening", 4, 20, 3, 1),
        ("conv2d 1x1", 6, 5, 1, 1),
    ];
    for (i, &(label, c_in, c_out, k, d)) in cases.iter().enumerate() {
        let seed = 10 * i as u64;
        let spec = ConvSpec::same(k, d)?;
        let x: Tensor<T> = uniform([2, c_in, 7, 6], 0.5, 1.5, seed);
        let w: Tensor<T> = uniform([c_out, c_in, k, k], 0.5, 1.5, seed + 1);
        let b: Tensor<T> = uniform([c_out, 1, 1, 1], -0.5, 0.5, seed + 2);
        {
            let (w, b) = (w.clone(), b.clone());
            r.check(&format!("{label} input"), x.clone(), true, move |g, x| {
                let (w, b) = (g.constant(w.clone()), g.constant(b.clone()));
                let y = g.conv2d(x, w, b, spec)?;
                positive(g, y, seed + 3)
            })?;
        }
        {
            let (x, b) = (x.clone(), b.clone());
            r.check(&format!("{label} weight"), w.clone(), true, move |g, w| {
                let (x, b) = (g.constant(x.clone()), g.constant(b.clone()));
                let y = g.conv2d(x, w, b, spec)?;
                positive(g, y, seed + 3)
            })?;
        }
        r.check(&format!("{label} bias"), b, true, move |g, b| {
            let (x, w) = (g.constant(x.clone()), g.constant(w.clone()));
            let y = g.conv2d(x, w, b, spec)?;
            positive(g, y, seed + 3)
        })?;
    }
    Ok(())
}

fn kernel_checks<T: Element>(r: &mut Runner<T>) -> Result<()> {
    conv_checks(r)?;
    r.check("maxpool2d 2x2 stride 2", distinct([1, 2, 6, 8], 100), true, |g, x| {
        let y = g.maxpool2d(x, 2, 2, false)?;
        positive(g, y, 101)
    })?;
    r.check("maxpool2d 7x7 same", distinct([1, 2, 9, 9], 102), true, |g, x| {
        let y = g.maxpool2d(x, 7, 1, true)?;
        positive(g, y, 103)
    })?;
    r.check("upsample x2", uniform([2, 2, 3, 4], -1.0, 1.0, 104), true, |g, x| {
        let y = g.upsample_nearest(x, 2)?;
        positive(g, y, 105)
    })?;
    let other: Tensor<T> = uniform([1, 3, 4, 4], -1.0, 1.0, 106);
    r.check("concat", uniform([1, 2, 4, 4], -1.0, 1.0, 107), true, move |g, x| {
        let o = g.constant(other.clone());
        let y = g.concat_channels(&[o, x, o])?;
        positive(g, y, 108)
    })?;
    let other: Tensor<T> = uniform([1, 2, 4, 4], 0.5, 1.5, 109);
    {
        let other = other.clone();
        r.check("add", uniform([1, 2, 4, 4], -1.0, 1.0, 110), true, move |g, x| {
            let o = g.constant(other.clone());
            let y = g.add(x, o)?;
            positive(g, y, 111)
        })?;
    }
    // quadratic, so central differences are exact up to rounding
    r.check("mul", uniform([1, 2, 4, 4], 0.5, 1.5, 112), true, move |g, x| {
        let o = g.constant(other.clone());
        let y = g.mul(x, o)?;
        let y = g.mul(y, x)?;
        positive(g, y, 113)
    })?;
    r.check("relu", off_zero([1, 2, 4, 4], 114), true, |g, x| {
        let y = g.relu(x)?;
        weighted(g, y, -1.5, 1.5, 115)
    })?;
    r.check("sigmoid", uniform([1, 2, 4, 4], -3.0, 3.0, 116), false, |g, x| {
        let y = g.sigmoid(x)?;
        positive(g, y, 117)
    })?;
    let target: Tensor<T> = uniform::<T>([1, 1, 5, 5], 0.0, 1.0, 118)
        .map(|v| if v.as_f64() < 0.5 { T::zero() } else { T::one() });
    r.check("bce", uniform([1, 1, 5, 5], 0.2, 0.8, 119), false, move |g, p| {
        let t = g.constant(target.clone());
        g.bce(p, t)
    })?;
    Ok(())
}

/// First step of the 64-bit composite differences, and the smallest one tried.
const COMPOSITE_EPS: f64 = 1e-5;
const COMPOSITE_MIN_EPS: f64 = 1e-7;
/// Accepted kink bias, relative to the difference quotient.
const KINK_BUDGET: f64 = 1e-5;

fn eval64<F>(f: &F, x: &Tensor<f64>, i: usize, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, NodeId) -> Result<NodeId>,
{
    let mut x = x.clone();
    x.data_mut()[i] += h;
    let mut g = Graph::new();
    let id = g.constant(x);
    let out = f(&mut g, id)?;
    let v: f64 = g.value(out).item()?;
    if !v.is_finite() {
        return Err(Error::Numeric(format!("objective is not finite around element {i}")));
    }
    Ok(v)
}

/// Central differences that shrink the step while a ReLU or max-pool kink
/// lies inside it. A kink at distance `d < h` with slope jump `s` biases the
/// quotient by `s (h - d) / 2h` and leaves the same `s (h - d)` in the second
/// difference, which a smooth function keeps at `h^2 f''`.
fn kink_safe_differences<F>(f: &F, x: &Tensor<f64>, indices: &[usize]) -> Result<Vec<f64>>
where
    F: Fn(&mut Graph<f64>, NodeId) -> Result<NodeId>,
{
    let f0 = eval64(f, x, 0, 0.0)?;
    // roundoff of one objective evaluation
    let noise = 64.0 * f64::EPSILON * f0.abs();
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let mut h = COMPOSITE_EPS;
        let d = loop {
            let (fp, fm) = (eval64(f, x, i, h)?, eval64(f, x, i, -h)?);
            let d = (fp - fm) / (2.0 * h);
            let second = (fp - 2.0 * f0 + fm).abs();
            if second <= 2.0 * h * KINK_BUDGET * d.abs() + noise || h <= COMPOSITE_MIN_EPS {
                break d;
            }
            h *= 0.5;
        };
        out.push(d);
    }
    Ok(out)
}

/// 64-bit check of `f64_fn`, then the 32-bit analytic gradient of `f32_fn`
/// against the same 64-bit central differences.
fn composite<F32, F64>(
    out: &mut Vec<SuiteCheck>,
    name: &str,
    x: &Tensor<f32>,
    indices: &[usize],
    f32_fn: F32,
    f64_fn: F64,
) -> Result<()>
where
    F32: Fn(&mut Graph<f32>, NodeId) -> Result<NodeId>,
    F64: Fn(&mut Graph<f64>, NodeId) -> Result<NodeId>,
{
    let x64: Tensor<f64> = x.cast();
    let numeric = kink_safe_differences(&f64_fn, &x64, indices)?;
    let a64 = analytic_gradient(&f64_fn, &x64)?;
    let a32 = analytic_gradient(&f32_fn, x)?;
    out.push(SuiteCheck {
        name: name.to_owned(),
        precision: "f64",
        tolerance: F64_TOLERANCE,
        report: compare(&a64, &numeric, indices),
    });
    out.push(SuiteCheck {
        name: format!("{name}, 64-bit differences"),
        precision: "f32",
        tolerance: F32_TOLERANCE,
        report: compare(&a32, &numeric, indices),
    });
    Ok(())
}

fn inception_objective<T: Element>(
    block: &InceptionBlock,
    params: &ParameterSet<T>,
    g: &mut Graph<T>,
    x: NodeId,
) -> Result<NodeId> {
    let nodes = params.bind(g, false);
    let y = block.forward(g, &nodes, x)?;
    weighted(g, y, -1.0, 1.0, 121)
}

/// The full model at randomized biases: zero-initialized biases over
/// all-zero activations would put whole channels exactly on a ReLU kink.
struct ModelCase {
    model: BifurcatedModel,
    image: Tensor<f32>,
    lung: Tensor<f32>,
    infection: Tensor<f32>,
    threshold: f64,
}

impl ModelCase {
    fn new() -> Result<Self> {
        let cfg = ModelConfig {
            levels: 2,
            base_channels: 4,
            fcn_channels: 4,
            input_size: (16, 16),
            ..ModelConfig::default()
        };
        let mut model = BifurcatedModel::new(cfg, 3)?;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..model.params.len() {
            if model.params.by_index(i).0.ends_with(".bias") {
                for v in model.params.by_index_mut(i).data_mut() {
                    *v = rng.gen_range(-0.1..0.1);
                }
            }
        }
        let sample = synth_phantom(1, 16, 4)?.remove(0);
        let threshold = gate_threshold(&model, &sample.image)?;
        Ok(ModelCase {
            model,
            image: sample.image,
            lung: sample.lung_mask,
            infection: sample.infection_mask,
            threshold,
        })
    }

    /// Weighted sum of the three losses, the objective used in training.
    /// Parameter `target`, if any, is the node `x`; otherwise `x` is the image.
    fn objective<T: Element>(
        &self,
        params: &ParameterSet<T>,
        target: Option<usize>,
        g: &mut Graph<T>,
        x: NodeId,
    ) -> Result<NodeId> {
        let nodes: Vec<NodeId> = params
            .iter()
            .enumerate()
            .map(|(i, (_, p))| if Some(i) == target { x } else { g.constant(p.clone()) })
            .collect();
        let image = match target {
            Some(_) => g.constant(self.image.cast()),
            None => x,
        };
        let out = self.model.forward(g, &nodes, image, self.threshold)?;
        let lt = g.constant(self.lung.cast());
        let it = g.constant(self.infection.cast());
        let l_lung = g.bce(out.lung, lt)?;
        let l_aux = g.bce(out.aux, it)?;
        let l_fin = g.bce(out.fin, it)?;
        crate::loss::total_loss_node(g, l_lung, l_aux, l_fin, &self.model.config.loss_weights)
    }
}

/// A threshold in the widest gap between the model's lung probabilities,
/// so no finite-difference step flips the piecewise-constant lung gate.
fn gate_threshold(model: &BifurcatedModel, image: &Tensor<f32>) -> Result<f64> {
    let lung = model.predict(image, 0.5)?.lung;
    let mut v: Vec<f64> = lung.data().iter().map(|&p| p as f64).collect();
    v.sort_by(f64::total_cmp);
    let best = v
        .windows(2)
        .max_by(|a, b| (a[1] - a[0]).total_cmp(&(b[1] - b[0])))
        .map_or(0.5, |w| 0.5 * (w[0] + w[1]));
    Ok(best)
}

fn composite_checks() -> Result<Vec<SuiteCheck>> {
    let mut out = Vec::new();

    let cfg = InceptionConfig { c_in: 4, c_out: 8, d_rate: 2 };
    let (block, params) = InceptionBlock::new("block", cfg, 5)?;
    let (p32, p64) = (params.clone(), params.cast::<f64>());
    let x: Tensor<f32> = uniform([1, 4, 8, 8], -1.0, 1.0, 120);
    let all: Vec<usize> = (0..x.numel()).collect();
    composite(
        &mut out,
        "inception block d=2 input",
        &x,
        &all,
        |g, x| inception_objective(&block, &p32, g, x),
        |g, x| inception_objective(&block, &p64, g, x),
    )?;

    let case = ModelCase::new()?;
    let (p32, p64) = (case.model.params.clone(), case.model.params.cast::<f64>());
    let all: Vec<usize> = (0..case.image.numel()).collect();
    composite(
        &mut out,
        "model 1x1x16x16 input",
        &case.image,
        &all,
        |g, x| case.objective(&p32, None, g, x),
        |g, x| case.objective(&p64, None, g, x),
    )?;

    // Three elements of every parameter tensor; the worst tensor is reported.
    let mut worst: [Option<(String, SuiteCheck)>; 2] = [None, None];
    for target in 0..p32.len() {
        let (name, value) = p32.by_index(target);
        let n = value.numel();
        let mut idx = vec![0, n / 2, n - 1];
        idx.dedup();
        let mut pair = Vec::new();
        composite(
            &mut pair,
            "model 1x1x16x16 parameters",
            value,
            &idx,
            |g, x| case.objective(&p32, Some(target), g, x),
            |g, x| case.objective(&p64, Some(target), g, x),
        )?;
        for (slot, check) in worst.iter_mut().zip(pair) {
            if slot.as_ref().is_none_or(|(_, w)| check.report.max_rel_error > w.report.max_rel_error) {
                *slot = Some((name.to_owned(), check));
            }
        }
    }
    for (name, mut check) in worst.into_iter().flatten() {
        check.name = format!("{} (worst {name})", check.name);
        out.push(check);
    }
    Ok(out)
}
