//! Shared encoder and the decoder used by both output branches.

use super::inception::{InceptionBlock, InceptionConfig};
use super::layers::{Conv, ParamBuilder};
use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::Element;

/// `levels` stages of inception block, skip, 2x2/2 max-pool, then two plain
/// 3x3 conv+ReLU layers at `base · 2^levels` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub stages: Vec<InceptionBlock>,
    pub bottleneck: [Conv; 2],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderOutput {
    pub bottom: NodeId,
    /// Pre-pool feature maps, shallow to deep.
    pub skips: Vec<NodeId>,
}

impl Encoder {
    pub(crate) fn build(b: &mut ParamBuilder, levels: usize, base: usize, d_rate: usize) -> Result<Self> {
        let mut stages = Vec::with_capacity(levels);
        let mut c_in = 1;
        for i in 0..levels {
            let c_out = base << i;
            let cfg = InceptionConfig { c_in, c_out, d_rate };
            stages.push(InceptionBlock::build(b, &format!("encoder.level{i}"), cfg)?);
            c_in = c_out;
        }
        let c_bottom = base << levels;
        let bottleneck = [
            b.conv("encoder.bottleneck1", c_in, c_bottom, 3, 1)?,
            b.conv("encoder.bottleneck2", c_bottom, c_bottom, 3, 1)?,
        ];
        Ok(Encoder { stages, bottleneck })
    }

    pub fn forward<T: Element>(
        &self,
        g: &mut Graph<T>,
        nodes: &[NodeId],
        image: NodeId,
    ) -> Result<EncoderOutput> {
        let s = g.value(image).shape();
        let div = 1usize << self.stages.len();
        if s.h % div != 0 || s.w % div != 0 {
            return Err(Error::Shape(format!(
                "input {}x{} is not divisible by 2^{}",
                s.h,
                s.w,
                self.stages.len()
            )));
        }
        let mut x = image;
        let mut skips = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let f = stage.forward(g, nodes, x)?;
            skips.push(f);
            x = g.maxpool2d(f, 2, 2, false)?;
        }
        let h = self.bottleneck[0].forward_relu(g, nodes, x)?;
        let bottom = self.bottleneck[1].forward_relu(g, nodes, h)?;
        Ok(EncoderOutput { bottom, skips })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderStage {
    pub up: Conv,
    pub fuse: [Conv; 2],
}

/// Stages run deep to shallow: upsample ×2, 3x3 conv+ReLU, concat with the
/// skip, two 3x3 conv+ReLU. Ends in an inception block, a 1x1 conv and a
/// sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    /// `stages[i]` produces level-`i` resolution.
    pub stages: Vec<DecoderStage>,
    pub head: InceptionBlock,
    pub out: Conv,
}

impl Decoder {
    pub(crate) fn build(
        b: &mut ParamBuilder,
        name: &str,
        levels: usize,
        base: usize,
        head_d_rate: usize,
    ) -> Result<Self> {
        let mut stages = Vec::with_capacity(levels);
        for i in (0..levels).rev() {
            let (c_deep, c) = (base << (i + 1), base << i);
            stages.push(DecoderStage {
                up: b.conv(&format!("{name}.level{i}.up"), c_deep, c, 3, 1)?,
                fuse: [
                    b.conv(&format!("{name}.level{i}.fuse1"), 2 * c, c, 3, 1)?,
                    b.conv(&format!("{name}.level{i}.fuse2"), c, c, 3, 1)?,
                ],
            });
        }
        stages.reverse();
        let cfg = InceptionConfig {
            c_in: base,
            c_out: base,
            d_rate: head_d_rate,
        };
        let head = InceptionBlock::build(b, &format!("{name}.head"), cfg)?;
        let out = b.conv(&format!("{name}.out"), base, 1, 1, 1)?;
        Ok(Decoder { stages, head, out })
    }

    /// Returns the single-channel probability map.
    pub fn forward<T: Element>(
        &self,
        g: &mut Graph<T>,
        nodes: &[NodeId],
        enc: &EncoderOutput,
    ) -> Result<NodeId> {
        if enc.skips.len() != self.stages.len() {
            return Err(Error::Shape(format!(
                "decoder has {} levels but got {} skips",
                self.stages.len(),
                enc.skips.len()
            )));
        }
        let mut x = enc.bottom;
        for (stage, &skip) in self.stages.iter().zip(&enc.skips).rev() {
            let up = g.upsample_nearest(x, 2)?;
            let up = stage.up.forward_relu(g, nodes, up)?;
            let (su, ss) = (g.value(up).shape(), g.value(skip).shape());
            if (su.n, su.h, su.w) != (ss.n, ss.h, ss.w) {
                return Err(Error::Shape(format!(
                    "upsampled map {su} does not match skip {ss}"
                )));
            }
            let cat = g.concat_channels(&[up, skip])?;
            let h = stage.fuse[0].forward_relu(g, nodes, cat)?;
            x = stage.fuse[1].forward_relu(g, nodes, h)?;
        }
        let h = self.head.forward(g, nodes, x)?;
        let logits = self.out.forward(g, nodes, h)?;
        g.sigmoid(logits)
    }
}
