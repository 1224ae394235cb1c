//! Pixelwise binary cross-entropy and the weighted three-term objective.

use crate::autodiff::{Graph, NodeId, BCE_EPS};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Weights of the lung, auxiliary and final terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lung: f64,
    pub aux: f64,
    pub fin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lung: 0.5,
            aux: 1.0,
            fin: 2.0,
        }
    }
}

impl LossWeights {
    pub fn new(lung: f64, aux: f64, fin: f64) -> Result<Self> {
        let w = LossWeights { lung, aux, fin };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lung, self.aux, self.fin];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!(
                "loss weights must be finite and >= 0, got {all:?}"
            )));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::Config("at least one loss weight must be > 0".into()));
        }
        Ok(())
    }
}

/// `-(1/N) Σ [y ln p + (1 - y) ln(1 - p)]` with `p` clamped to
/// `[1e-7, 1 - 1e-7]`, accumulated in 64 bits.
pub fn bce_value<T: Element>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "bce prediction {} and target {} differ",
            pred.shape(),
            target.shape()
        )));
    }
    let mut acc = 0.0f64;
    for (&p, &y) in pred.data().iter().zip(target.data()) {
        let y = y.as_f64();
        if y != 0.0 && y != 1.0 {
            return Err(Error::Data(format!("bce target must be 0 or 1, found {y}")));
        }
        let p = p.as_f64().clamp(BCE_EPS, 1.0 - BCE_EPS);
        acc += if y == 1.0 { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(-acc / pred.numel() as f64)
}

/// Differentiable BCE node; the target is a constant.
pub fn bce<T: Element>(graph: &mut Graph<T>, pred: NodeId, target: NodeId) -> Result<NodeId> {
    graph.bce(pred, target)
}

/// `w_lung·l_lung + w_aux·l_aux + w_fin·l_fin` on plain numbers.
pub fn total_loss(l_lung: f64, l_aux: f64, l_fin: f64, w: &LossWeights) -> Result<f64> {
    for (name, v) in [("lung", l_lung), ("aux", l_aux), ("final", l_fin)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Contract(format!(
                "{name} loss term must be finite and >= 0, got {v}"
            )));
        }
    }
    Ok(w.lung * l_lung + w.aux * l_aux + w.fin * l_fin)
}

/// Graph version of [`total_loss`]; gradients split by weight.
pub fn total_loss_node<T: Element>(
    graph: &mut Graph<T>,
    l_lung: NodeId,
    l_aux: NodeId,
    l_fin: NodeId,
    w: &LossWeights,
) -> Result<NodeId> {
    for id in [l_lung, l_aux, l_fin] {
        let v = graph.value(id).item()?.as_f64();
        if v < 0.0 {
            return Err(Error::Contract(format!("loss term must be >= 0, got {v}")));
        }
    }
    graph.weighted_sum(&[(l_lung, w.lung), (l_aux, w.aux), (l_fin, w.fin)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use proptest::prelude::*;

    fn t(v: Vec<f64>) -> Tensor<f64> {
        let n = v.len();
        Tensor::new([1, 1, 1, n], v).unwrap()
    }

    #[test]
    fn perfect_prediction_is_near_zero() {
        let y = t(vec![0.0, 1.0, 1.0, 0.0]);
        assert!(bce_value(&y, &y).unwrap() < 1e-6);
    }

    #[test]
    fn half_probability_costs_ln2() {
        let l = bce_value(&t(vec![0.5]), &t(vec![1.0])).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn clamp_caps_the_loss() {
        let l = bce_value(&t(vec![0.0]), &t(vec![1.0])).unwrap();
        assert!((l - (-(1e-7f64).ln())).abs() < 1e-9);
        assert!((l - 16.118).abs() < 1e-3);
    }

    #[test]
    fn errors() {
        assert!(matches!(bce_value(&t(vec![0.5]), &t(vec![0.5])), Err(Error::Data(_))));
        assert!(matches!(
            bce_value(&t(vec![0.5]), &t(vec![1.0, 0.0])),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            total_loss(-1.0, 0.0, 0.0, &LossWeights::default()),
            Err(Error::Contract(_))
        ));
        assert!(LossWeights::new(0.0, 0.0, 0.0).is_err());
        assert!(LossWeights::new(-1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn weighted_total() {
        let w = LossWeights::default();
        assert_eq!(total_loss(1.0, 1.0, 1.0, &w).unwrap(), 3.5);
        assert_eq!(total_loss(0.0, 0.0, 0.0, &w).unwrap(), 0.0);
        let proj = LossWeights::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(total_loss(0.25, 7.0, 9.0, &proj).unwrap(), 0.25);
    }

    #[test]
    fn analytic_pixel_gradient_matches_formula_and_fd() {
        let p = t(vec![0.2, 0.7, 0.9, 0.4]);
        let y = t(vec![1.0, 0.0, 1.0, 0.0]);
        let mut g = Graph::new();
        let pid = g.param(p.clone());
        let yid = g.constant(y.clone());
        let l = bce(&mut g, pid, yid).unwrap();
        g.backward(l).unwrap();
        for i in 0..4 {
            let (pi, yi) = (p.data()[i], y.data()[i]);
            let expected = (pi - yi) / (pi * (1.0 - pi)) / 4.0;
            assert!((g.grad(pid).unwrap().data()[i] - expected).abs() < 1e-12);
        }
        let r = grad_check(
            |g: &mut Graph<f64>, x| {
                let yid = g.constant(y.clone());
                g.bce(x, yid)
            },
            &p,
            1e-6,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    proptest! {
        #[test]
        fn nonnegative_and_symmetric(ps in prop::collection::vec(0.0f64..1.0, 1..16),
                                     bits in prop::collection::vec(any::<bool>(), 16)) {
            let n = ps.len();
            let y: Vec<f64> = bits[..n].iter().map(|&b| b as u8 as f64).collect();
            let p = t(ps.clone());
            let l = bce_value(&p, &t(y.clone())).unwrap();
            prop_assert!(l >= 0.0);
            let flipped = bce_value(&t(ps.iter().map(|v| 1.0 - v).collect()),
                                    &t(y.iter().map(|v| 1.0 - v).collect())).unwrap();
            prop_assert!((l - flipped).abs() < 1e-6);
        }
    }
}
