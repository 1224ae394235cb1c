use bifurcated_seg::autodiff::{Graph, NodeId};
use bifurcated_seg::nn::{BifurcatedModel, ModelConfig, ModelOutputs};
use bifurcated_seg::{Shape, Tensor};
use proptest::prelude::*;

fn small(levels: usize) -> ModelConfig {
    ModelConfig {
        levels,
        base_channels: 4,
        fcn_channels: 4,
        input_size: (16, 16),
        ..ModelConfig::default()
    }
}

fn image(n: usize, h: usize, w: usize) -> Tensor<f32> {
    Tensor::from_fn(Shape::new(n, 1, h, w).unwrap(), |[n, _, y, x]| {
        let dy = y as f32 - h as f32 / 2.0;
        let dx = x as f32 - w as f32 / 2.0;
        let r = (dy * dy + dx * dx).sqrt() / h as f32;
        (1.0 - r).max(0.0) + 0.05 * ((x * 3 + y * 5 + n) % 7) as f32 / 7.0
    })
}

fn build<T: bifurcated_seg::tensor::Element>(
    m: &BifurcatedModel,
    g: &mut Graph<T>,
    img: &Tensor<f32>,
) -> (Vec<NodeId>, ModelOutputs) {
    let nodes = m.params.cast::<T>().bind(g, true);
    let x = g.constant(img.cast());
    let out = m.forward(g, &nodes, x, 0.5).unwrap();
    (nodes, out)
}

#[test]
fn encoder_shapes_at_default_width() {
    let cfg = ModelConfig { input_size: (64, 64), ..ModelConfig::default() };
    let m = BifurcatedModel::new(cfg, 1).unwrap();
    let mut g = Graph::<f32>::new();
    let nodes = m.params.bind(&mut g, false);
    let x = g.constant(image(1, 64, 64));
    let enc = m.encoder.forward(&mut g, &nodes, x).unwrap();
    let dims: Vec<_> = enc.skips.iter().map(|&s| g.value(s).shape().dims()).collect();
    assert_eq!(dims, vec![[1, 16, 64, 64], [1, 32, 32, 32], [1, 64, 16, 16]]);
    assert_eq!(g.value(enc.bottom).shape().dims(), [1, 128, 8, 8]);
    let lung = m.lung_decoder.forward(&mut g, &nodes, &enc).unwrap();
    assert_eq!(g.value(lung).shape().dims(), [1, 1, 64, 64]);
    assert!(g.value(lung).data().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn zero_levels_keeps_full_resolution() {
    let m = BifurcatedModel::new(small(0), 1).unwrap();
    let mut g = Graph::<f32>::new();
    let nodes = m.params.bind(&mut g, false);
    let x = g.constant(image(1, 6, 10));
    let enc = m.encoder.forward(&mut g, &nodes, x).unwrap();
    assert!(enc.skips.is_empty());
    assert_eq!(g.value(enc.bottom).shape().dims(), [1, 4, 6, 10]);
    let p = m.predict(&image(1, 6, 10), 0.5).unwrap();
    assert_eq!(p.fin.shape().dims(), [1, 1, 6, 10]);
}

#[test]
fn repeated_forward_is_bitwise_identical() {
    let m = BifurcatedModel::new(small(2), 5).unwrap();
    let a = m.predict(&image(2, 16, 16), 0.5).unwrap();
    let b = m.predict(&image(2, 16, 16), 0.5).unwrap();
    assert!(a.lung.bitwise_eq(&b.lung) && a.aux.bitwise_eq(&b.aux) && a.fin.bitwise_eq(&b.fin));
}

#[test]
fn zero_weights_give_half_everywhere() {
    let mut m = BifurcatedModel::new(small(2), 5).unwrap();
    for t in m.params.values_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let p = m.predict(&image(1, 16, 16), 0.5).unwrap();
    for t in [&p.lung, &p.aux, &p.fin] {
        assert!(t.data().iter().all(|&v| v == 0.5));
    }
}

#[test]
fn mismatched_skips_are_shape_errors() {
    let m = BifurcatedModel::new(small(2), 5).unwrap();
    let mut g = Graph::<f32>::new();
    let nodes = m.params.bind(&mut g, false);
    let x = g.constant(image(1, 16, 16));
    let mut enc = m.encoder.forward(&mut g, &nodes, x).unwrap();
    enc.skips.swap(0, 1);
    assert!(matches!(
        m.lung_decoder.forward(&mut g, &nodes, &enc),
        Err(bifurcated_seg::Error::Shape(_))
    ));
    enc.skips.pop();
    assert!(m.lung_decoder.forward(&mut g, &nodes, &enc).is_err());
}

#[test]
fn fcn_consumes_the_auxiliary_map_and_gates_outside_lungs() {
    let m = BifurcatedModel::new(small(2), 11).unwrap();
    let mut g = Graph::<f32>::new();
    let (_, out) = build(&m, &mut g, &image(2, 16, 16));
    let img = image(2, 16, 16);
    let aux = g.value(out.aux);
    let bin = g.value(out.lung_binary);
    let gated = g.value(out.gated);
    assert!(bin.data().iter().all(|&v| v == 0.0 || v == 1.0));
    let lung = g.value(out.lung);
    for n in 0..2 {
        for y in 0..16 {
            for x in 0..16 {
                let b = bin.at(n, 0, y, x);
                assert_eq!(b, (lung.at(n, 0, y, x) >= 0.5) as u8 as f32);
                assert_eq!(gated.at(n, 0, y, x).to_bits(), (img.at(n, 0, y, x) * b).to_bits());
                assert_eq!(gated.at(n, 1, y, x).to_bits(), (aux.at(n, 0, y, x) * b).to_bits());
                if b == 0.0 {
                    assert_eq!(gated.at(n, 0, y, x), 0.0);
                    assert_eq!(gated.at(n, 1, y, x), 0.0);
                }
            }
        }
    }
}

#[test]
fn fcn_head_identity_and_zero_masks() {
    let m = BifurcatedModel::new(small(2), 3).unwrap();
    let img = image(1, 8, 8);
    let prob = Tensor::from_fn(Shape::new(1, 1, 8, 8).unwrap(), |[_, _, y, x]| {
        0.1 + 0.8 * ((y * 8 + x) as f32 / 64.0)
    });
    for fill in [1.0f32, 0.0] {
        let mut g = Graph::<f32>::new();
        let nodes = m.params.bind(&mut g, false);
        let i = g.constant(img.clone());
        let p = g.constant(prob.clone());
        let mask = g.constant(Tensor::full(Shape::new(1, 1, 8, 8).unwrap(), fill));
        let out = m.fcn.forward(&mut g, &nodes, i, p, mask).unwrap();
        let cat = bifurcated_seg::tensor::concat_channels(&[&img, &prob]).unwrap();
        let gated = g.value(out.gated);
        if fill == 1.0 {
            assert!(gated.bitwise_eq(&cat));
        } else {
            assert!(gated.data().iter().all(|&v| v == 0.0));
            let f = g.value(out.prob).data();
            assert!(f.iter().all(|v| v.to_bits() == f[0].to_bits()));
        }
    }
    let mut g = Graph::<f32>::new();
    let nodes = m.params.bind(&mut g, false);
    let i = g.constant(img.clone());
    let p = g.constant(image(1, 4, 4));
    let mask = g.constant(Tensor::ones(Shape::new(1, 1, 8, 8).unwrap()));
    assert!(matches!(
        m.fcn.forward(&mut g, &nodes, i, p, mask),
        Err(bifurcated_seg::Error::Shape(_))
    ));
}

fn target() -> Tensor<f64> {
    image(1, 16, 16).map(|v| (v > 0.6) as u8 as f32).cast()
}

fn encoder_param_indices(m: &BifurcatedModel) -> Vec<usize> {
    m.params
        .names()
        .enumerate()
        .filter(|(_, n)| n.starts_with("encoder."))
        .map(|(i, _)| i)
        .collect()
}

fn nonzero(t: &Tensor<f64>) -> bool {
    t.data().iter().any(|&v| v != 0.0)
}

// The encoder feeds both decoders: a loss on either head alone reaches every
// encoder tensor.
#[test]
fn shared_encoder_receives_gradient_from_each_head() {
    let m = BifurcatedModel::new(small(2), 21).unwrap();
    for head in ["lung", "aux"] {
        let mut g = Graph::<f64>::new();
        // signed input so no single-filter branch starts out dead
        let signed = image(1, 16, 16).map(|v| v - 0.7);
        let (nodes, out) = build(&m, &mut g, &signed);
        let tgt = g.constant(target());
        let pred = if head == "lung" { out.lung } else { out.aux };
        let l = g.bce(pred, tgt).unwrap();
        g.backward(l).unwrap();
        for i in encoder_param_indices(&m) {
            if m.params.by_index(i).0.ends_with(".bias") {
                continue;
            }
            assert!(nonzero(&g.grad_or_zeros(nodes[i])), "{head}: {}", m.params.by_index(i).0);
        }
    }
}

fn losses(m: &BifurcatedModel, params: &bifurcated_seg::autodiff::ParameterSet<f64>) -> (f64, f64) {
    let mut g = Graph::<f64>::new();
    let nodes = params.bind(&mut g, false);
    let x = g.constant(image(1, 16, 16).cast());
    let out = m.forward(&mut g, &nodes, x, 0.5).unwrap();
    let tgt = g.constant(target());
    let lf = g.bce(out.fin, tgt).unwrap();
    let ll = g.bce(out.lung, tgt).unwrap();
    (g.value(lf).item().unwrap(), g.value(ll).item().unwrap())
}

// Lung-decoder weights only reach the final map through the binarized mask,
// which carries no gradient; they are trained by the lung term alone.
#[test]
fn lung_decoder_is_cut_from_the_final_loss() {
    let m = BifurcatedModel::new(small(2), 8).unwrap();
    let name = "lung.out.weight";
    let idx = m.params.index_of(name).unwrap();

    let mut g = Graph::<f64>::new();
    let (nodes, out) = build(&m, &mut g, &image(1, 16, 16));
    let tgt = g.constant(target());
    let lf = g.bce(out.fin, tgt).unwrap();
    g.backward(lf).unwrap();
    assert!(!nonzero(&g.grad_or_zeros(nodes[idx])));
    for (i, n) in m.params.names().enumerate() {
        if n.starts_with("lung.") {
            assert!(!nonzero(&g.grad_or_zeros(nodes[i])), "{n}");
        }
    }

    let mut g2 = Graph::<f64>::new();
    let (nodes2, out2) = build(&m, &mut g2, &image(1, 16, 16));
    let tgt = g2.constant(target());
    let ll = g2.bce(out2.lung, tgt).unwrap();
    g2.backward(ll).unwrap();
    let analytic_lung = g2.grad_or_zeros(nodes2[idx]).data()[0];
    assert!(analytic_lung != 0.0);

    // finite differences on one weight
    let eps = 1e-6;
    let base = m.params.cast::<f64>();
    let mut plus = base.clone();
    let mut minus = base.clone();
    plus.by_index_mut(idx).data_mut()[0] += eps;
    minus.by_index_mut(idx).data_mut()[0] -= eps;
    let (fp, lp) = losses(&m, &plus);
    let (fm, lm) = losses(&m, &minus);
    assert_eq!((fp - fm) / (2.0 * eps), 0.0);
    let numeric_lung = (lp - lm) / (2.0 * eps);
    let rel = (numeric_lung - analytic_lung).abs() / analytic_lung.abs();
    assert!(rel < 1e-5, "{numeric_lung} vs {analytic_lung}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]
    #[test]
    fn output_resolution_matches_input(
        size in prop::sample::select(vec![(32usize, 32usize), (64, 64), (128, 128), (32, 96)]),
        seed in 0u64..1000,
    ) {
        let m = BifurcatedModel::new(small(2), seed).unwrap();
        let p = m.predict(&image(1, size.0, size.1), 0.5).unwrap();
        for t in [&p.lung, &p.aux, &p.fin] {
            prop_assert_eq!(t.shape().dims(), [1, 1, size.0, size.1]);
            prop_assert!(t.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }
}
