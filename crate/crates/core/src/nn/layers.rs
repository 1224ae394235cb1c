use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId, ParameterSet};
use crate::error::{Error, Result};
use crate::tensor::{ConvSpec, Element, Shape, Tensor};

/// Registers named parameters with seeded He-uniform initialization.
pub(crate) struct ParamBuilder {
    pub params: ParameterSet<f32>,
    rng: ChaCha8Rng,
}

impl ParamBuilder {
    pub fn new(seed: u64) -> Self {
        ParamBuilder {
            params: ParameterSet::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Weights uniform in `±sqrt(6 / fan_in)`, bias zero. The fan-in bound
    /// keeps activation variance level through the ReLU stack; the
    /// `fan_in + fan_out` bound loses about half of it per conv, which leaves
    /// the output maps near 0.5 and can stall the infection decoder.
    pub fn conv(
        &mut self,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        dilation: usize,
    ) -> Result<Conv> {
        let spec = ConvSpec::same(k, dilation)?;
        let fan_in = (c_in * k * k) as f64;
        let limit = (6.0 / fan_in).sqrt();
        let wshape = Shape::new(c_out, c_in, k, k)?;
        let data = (0..wshape.numel())
            .map(|_| self.rng.gen_range(-limit..limit) as f32)
            .collect();
        let weight = self
            .params
            .insert(format!("{name}.weight"), Tensor::from_vec(wshape, data)?)?;
        let bias = self.params.insert(
            format!("{name}.bias"),
            Tensor::zeros(Shape::new(c_out, 1, 1, 1)?),
        )?;
        Ok(Conv { weight, bias, spec })
    }
}

/// A convolution whose weight and bias live in a [`ParameterSet`] at fixed
/// positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv {
    pub weight: usize,
    pub bias: usize,
    pub spec: ConvSpec,
}

impl Conv {
    pub fn forward<T: Element>(
        &self,
        g: &mut Graph<T>,
        nodes: &[NodeId],
        x: NodeId,
    ) -> Result<NodeId> {
        let (w, b) = lookup(nodes, self.weight, self.bias)?;
        g.conv2d(x, w, b, self.spec)
    }

    pub fn forward_relu<T: Element>(
        &self,
        g: &mut Graph<T>,
        nodes: &[NodeId],
        x: NodeId,
    ) -> Result<NodeId> {
        let y = self.forward(g, nodes, x)?;
        g.relu(y)
    }
}

fn lookup(nodes: &[NodeId], w: usize, b: usize) -> Result<(NodeId, NodeId)> {
    match (nodes.get(w), nodes.get(b)) {
        (Some(&w), Some(&b)) => Ok((w, b)),
        _ => Err(Error::Contract(format!(
            "parameter nodes cover {} entries; layer needs index {}",
            nodes.len(),
            w.max(b)
        ))),
    }
}
