use super::layers::{Conv, ParamBuilder};
use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::Element;

/// Fusion head: gates `[image, infection_prob]` by the binary lung mask, then
/// two 3x3 conv+ReLU, a 1x1 conv and a sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct FcnHead {
    pub convs: [Conv; 2],
    pub out: Conv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FcnOutput {
    pub gated: NodeId,
    pub prob: NodeId,
}

impl FcnHead {
    pub(crate) fn build(b: &mut ParamBuilder, channels: usize) -> Result<Self> {
        Ok(FcnHead {
            convs: [
                b.conv("fcn.conv1", 2, channels, 3, 1)?,
                b.conv("fcn.conv2", channels, channels, 3, 1)?,
            ],
            out: b.conv("fcn.out", channels, 1, 1, 1)?,
        })
    }

    pub fn forward<T: Element>(
        &self,
        g: &mut Graph<T>,
        nodes: &[NodeId],
        image: NodeId,
        infection_prob: NodeId,
        lung_binary: NodeId,
    ) -> Result<FcnOutput> {
        let shapes = [image, infection_prob, lung_binary].map(|id| g.value(id).shape());
        if shapes.iter().any(|s| *s != shapes[0] || s.c != 1) {
            return Err(Error::Shape(format!(
                "fcn head needs three equal single-channel maps, got {}, {}, {}",
                shapes[0], shapes[1], shapes[2]
            )));
        }
        let cat = g.concat_channels(&[image, infection_prob])?;
        let gated = g.mul(cat, lung_binary)?;
        let h = self.convs[0].forward_relu(g, nodes, gated)?;
        let h = self.convs[1].forward_relu(g, nodes, h)?;
        let logits = self.out.forward(g, nodes, h)?;
        let prob = g.sigmoid(logits)?;
        Ok(FcnOutput { gated, prob })
    }
}
