//! Multi-scale block: four parallel branches concatenated along channels.
//!
//! ```text
//!         ┌─ 3x3 ─ 3x3 ──────────────────┐
//!         ├─ 5x5(d) ─ 5x5(d) ────────────┤
//!   x ────┤                              ├── concat ── c_out
//!         ├─ 9x9(d) ─ 9x9(d) ────────────┤
//!         └─ maxpool 7x7/1 ─ 1x1 ────────┘
//! ```
//!
//! Each branch yields `c_out / 4` channels, every convolution is followed by
//! ReLU, and all branches keep the input's spatial size.

use super::layers::{Conv, ParamBuilder};
use crate::autodiff::{Graph, NodeId, ParameterSet};
use crate::error::{Error, Result};
use crate::tensor::Element;

pub const POOL_BRANCH_WINDOW: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InceptionConfig {
    pub c_in: usize,
    pub c_out: usize,
    /// Dilation of the 5x5 and 9x9 branches (both convolutions).
    pub d_rate: usize,
}

impl InceptionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_in == 0 {
            return Err(Error::Config("inception c_in must be >= 1".into()));
        }
        if self.c_out == 0 || self.c_out % 4 != 0 {
            return Err(Error::Config(format!(
                "inception c_out must be a positive multiple of 4, got {}",
                self.c_out
            )));
        }
        if self.d_rate == 0 {
            return Err(Error::Config("inception d_rate must be >= 1".into()));
        }
        Ok(())
    }

    pub fn branch_width(&self) -> usize {
        self.c_out / 4
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InceptionBlock {
    pub config: InceptionConfig,
    pub branch_a: [Conv; 2],
    pub branch_b: [Conv; 2],
    pub branch_c: [Conv; 2],
    pub pool_proj: Conv,
}

impl InceptionBlock {
    /// A standalone block with its own seeded parameters, named `{name}.a1`
    /// through `{name}.d`.
    pub fn new(name: &str, config: InceptionConfig, seed: u64) -> Result<(Self, ParameterSet<f32>)> {
        let mut b = ParamBuilder::new(seed);
        let block = Self::build(&mut b, name, config)?;
        Ok((block, b.params))
    }

    pub(crate) fn build(b: &mut ParamBuilder, name: &str, config: InceptionConfig) -> Result<Self> {
        config.validate()?;
        let (ci, q, d) = (config.c_in, config.branch_width(), config.d_rate);
        Ok(InceptionBlock {
            config,
            branch_a: [
                b.conv(&format!("{name}.a1"), ci, q, 3, 1)?,
                b.conv(&format!("{name}.a2"), q, q, 3, 1)?,
            ],
            branch_b: [
                b.conv(&format!("{name}.b1"), ci, q, 5, d)?,
                b.conv(&format!("{name}.b2"), q, q, 5, d)?,
            ],
            branch_c: [
                b.conv(&format!("{name}.c1"), ci, q, 9, d)?,
                b.conv(&format!("{name}.c2"), q, q, 9, d)?,
            ],
            pool_proj: b.conv(&format!("{name}.d"), ci, q, 1, 1)?,
        })
    }

    pub fn forward<T: Element>(
        &self,
        g: &mut Graph<T>,
        nodes: &[NodeId],
        x: NodeId,
    ) -> Result<NodeId> {
        let c = g.value(x).shape().c;
        if c != self.config.c_in {
            return Err(Error::Shape(format!(
                "inception block expects {} input channels, got {c}",
                self.config.c_in
            )));
        }
        let mut outs = Vec::with_capacity(4);
        for branch in [&self.branch_a, &self.branch_b, &self.branch_c] {
            let h = branch[0].forward_relu(g, nodes, x)?;
            outs.push(branch[1].forward_relu(g, nodes, h)?);
        }
        let pooled = g.maxpool2d(x, POOL_BRANCH_WINDOW, 1, true)?;
        outs.push(self.pool_proj.forward_relu(g, nodes, pooled)?);
        g.concat_channels(&outs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{concat_channels, conv2d, elementwise, maxpool2d, ConvSpec, ElementwiseKind, Shape, Tensor};

    fn block(c_in: usize, c_out: usize, d_rate: usize, seed: u64) -> (InceptionBlock, ParamBuilder) {
        let mut b = ParamBuilder::new(seed);
        let blk = InceptionBlock::build(&mut b, "blk", InceptionConfig { c_in, c_out, d_rate }).unwrap();
        (blk, b)
    }

    fn run(blk: &InceptionBlock, b: &ParamBuilder, x: &Tensor<f32>) -> Tensor<f32> {
        let mut g = Graph::new();
        let nodes = b.params.bind(&mut g, false);
        let xid = g.constant(x.clone());
        let y = blk.forward(&mut g, &nodes, xid).unwrap();
        g.value(y).clone()
    }

    fn input(c: usize, h: usize, w: usize) -> Tensor<f32> {
        Tensor::from_fn(Shape::new(1, c, h, w).unwrap(), |[_, c, y, x]| {
            (((c * 5 + y * 3 + x * 11) % 17) as f32) / 8.0 - 1.0
        })
    }

    #[test]
    fn config_rejects_bad_widths() {
        let bad = InceptionConfig { c_in: 4, c_out: 10, d_rate: 1 };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let mut b = ParamBuilder::new(0);
        assert!(InceptionBlock::build(&mut b, "x", bad).is_err());
        assert!(InceptionConfig { c_in: 4, c_out: 8, d_rate: 0 }.validate().is_err());
    }

    #[test]
    fn output_shape() {
        let (blk, b) = block(8, 16, 2, 1);
        let y = run(&blk, &b, &input(8, 32, 32));
        assert_eq!(y.shape().dims(), [1, 16, 32, 32]);
    }

    #[test]
    fn wrong_input_channels() {
        let (blk, b) = block(8, 16, 2, 1);
        let mut g = Graph::new();
        let nodes = b.params.bind(&mut g, false);
        let x = g.constant(input(3, 8, 8));
        assert!(matches!(blk.forward(&mut g, &nodes, x), Err(Error::Shape(_))));
    }

    // Recompute every branch with plain tensor kernels at dilation 1.
    #[test]
    fn unit_dilation_matches_plain_stacks() {
        let (blk, b) = block(3, 8, 1, 4);
        let x = input(3, 12, 12);
        let y = run(&blk, &b, &x);
        let p = |i: usize| b.params.by_index(i).1.clone();
        let relu = |t: Tensor<f32>| elementwise(ElementwiseKind::Relu, &t, None).unwrap();
        let plain = |t: &Tensor<f32>, c: &Conv, k: usize| {
            relu(conv2d(t, &p(c.weight), &p(c.bias), &ConvSpec::same(k, 1).unwrap()).unwrap())
        };
        let mut parts = Vec::new();
        for (br, k) in [(&blk.branch_a, 3), (&blk.branch_b, 5), (&blk.branch_c, 9)] {
            parts.push(plain(&plain(&x, &br[0], k), &br[1], k));
        }
        let pooled = maxpool2d(&x, 7, 1, true).unwrap();
        parts.push(plain(&pooled, &blk.pool_proj, 1));
        let refs: Vec<&Tensor<f32>> = parts.iter().collect();
        let expected = concat_channels(&refs).unwrap();
        assert!(y.bitwise_eq(&expected));
    }

    // Constant input, zero biases: away from the padded border each branch-a
    // filter sees the same window, so its map is constant there.
    #[test]
    fn branch_a_interior_constant_for_constant_input() {
        let (blk, b) = block(2, 8, 2, 7);
        let x = Tensor::full(Shape::new(1, 2, 16, 16).unwrap(), 0.75f32);
        let y = run(&blk, &b, &x);
        let w1 = b.params.by_index(blk.branch_a[0].weight).1;
        let w2 = b.params.by_index(blk.branch_a[1].weight).1;
        let q = 2;
        // direct summation: first layer value per filter, then second layer
        let h1: Vec<f64> = (0..q)
            .map(|o| {
                let s: f64 = (0..2 * 9).map(|i| w1.data()[o * 18 + i] as f64).sum();
                (0.75 * s).max(0.0)
            })
            .collect();
        for o in 0..q {
            let mut s = 0.0f64;
            for i in 0..q {
                for k in 0..9 {
                    s += w2.data()[(o * q + i) * 9 + k] as f64 * h1[i];
                }
            }
            let expected = s.max(0.0);
            for yy in 2..14 {
                for xx in 2..14 {
                    let v = y.at(0, o, yy, xx) as f64;
                    assert!((v - expected).abs() < 1e-5, "{v} vs {expected}");
                }
            }
        }
    }
}
