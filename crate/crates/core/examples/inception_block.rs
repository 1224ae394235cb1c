//! One inception block: four parallel branches (3x3, dilated 5x5, dilated
//! 9x9, 7x7 max-pool + 1x1), each a quarter of the output channels.

use bifurcated_seg::autodiff::Graph;
use bifurcated_seg::nn::{InceptionBlock, InceptionConfig};
use bifurcated_seg::{Shape, Tensor};

fn main() {
    let cfg = InceptionConfig { c_in: 1, c_out: 16, d_rate: 2 };
    let (block, params) = InceptionBlock::new("demo", cfg, 42).unwrap();
    for (name, t) in params.iter() {
        println!("{name:<12} {}", t.shape());
    }

    // a bright square on a dark field
    let x = Tensor::from_fn(Shape::new(1, 1, 32, 32).unwrap(), |[_, _, y, x]| {
        if (12..20).contains(&y) && (12..20).contains(&x) { 0.9f32 } else { 0.1 }
    });
    let mut g = Graph::<f32>::new();
    let nodes = params.bind(&mut g, false);
    let xi = g.constant(x);
    let y = block.forward(&mut g, &nodes, xi).unwrap();
    let out = g.value(y);
    println!("output {}", out.shape());
    let q = cfg.branch_width();
    for (i, branch) in ["3x3", "5x5 dilated", "9x9 dilated", "pool + 1x1"].iter().enumerate() {
        let part = out.slice_channels(i * q, (i + 1) * q).unwrap();
        let active = part.data().iter().filter(|&&v| v > 0.0).count();
        println!("{branch:<12} channels {:>2}..{:<2} mean {:.4}  active {:.1}%",
            i * q, (i + 1) * q, part.sum() / part.numel() as f64, 100.0 * active as f64 / part.numel() as f64);
    }
}
