//! Builds the default model and prints its parameter layout and the shapes
//! of every intermediate map for a 64x64 slice.

use bifurcated_seg::autodiff::Graph;
use bifurcated_seg::nn::{BifurcatedModel, ModelConfig};
use bifurcated_seg::{Shape, Tensor};

fn main() {
    let cfg = ModelConfig { input_size: (64, 64), ..ModelConfig::default() };
    let m = BifurcatedModel::new(cfg, 0).unwrap();
    let mut groups: Vec<(String, usize)> = Vec::new();
    for (name, t) in m.params.iter() {
        let group = name.split('.').next().unwrap().to_owned();
        match groups.last_mut() {
            Some((g, n)) if *g == group => *n += t.numel(),
            _ => groups.push((group, t.numel())),
        }
    }
    for (g, n) in &groups {
        println!("{g:<10} {n:>8} parameters");
    }
    println!("total      {:>8} in {} tensors", groups.iter().map(|(_, n)| n).sum::<usize>(), m.params.len());

    let image = Tensor::from_fn(Shape::new(1, 1, 64, 64).unwrap(), |[_, _, y, x]| ((x ^ y) % 7) as f32 / 7.0);
    let mut g = Graph::<f32>::new();
    let nodes = m.params.bind(&mut g, false);
    let x = g.constant(image);
    let out = m.forward(&mut g, &nodes, x, 0.5).unwrap();
    for (i, s) in out.encoder.skips.iter().enumerate() {
        println!("skip {i}     {}", g.value(*s).shape());
    }
    println!("bottom     {}", g.value(out.encoder.bottom).shape());
    for (name, id) in [("lung", out.lung), ("aux", out.aux), ("gated", out.gated), ("final", out.fin)] {
        let t = g.value(id);
        let (lo, hi) = t.data().iter().fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        println!("{name:<10} {}  range [{lo:.4}, {hi:.4}]", t.shape());
    }
}
