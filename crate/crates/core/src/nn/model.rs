use super::fcn::FcnHead;
use super::layers::ParamBuilder;
use super::unet::{Decoder, Encoder, EncoderOutput};
use crate::autodiff::{Graph, NodeId, ParameterSet};
use crate::error::{Error, Result};
use crate::loss::LossWeights;
use crate::tensor::{Element, Tensor};

/// Lung mask threshold used inside the graph; the calibrated threshold only
/// applies to the final infection map.
pub const LUNG_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub levels: usize,
    /// Channels at level 0; doubles per level.
    pub base_channels: usize,
    pub encoder_d_rate: usize,
    pub decoder_end_d_rate: usize,
    pub fcn_channels: usize,
    pub loss_weights: LossWeights,
    pub input_size: (usize, usize),
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            levels: 3,
            base_channels: 16,
            encoder_d_rate: 2,
            decoder_end_d_rate: 1,
            fcn_channels: 16,
            loss_weights: LossWeights::default(),
            input_size: (256, 256),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.base_channels % 4 != 0 {
            return Err(Error::Config(format!(
                "base_channels must be a positive multiple of 4, got {}",
                self.base_channels
            )));
        }
        if self.fcn_channels == 0 {
            return Err(Error::Config("fcn_channels must be >= 1".into()));
        }
        if self.levels > 8 {
            return Err(Error::Config(format!("levels must be <= 8, got {}", self.levels)));
        }
        if self.decoder_end_d_rate == 0 || self.encoder_d_rate == 0 {
            return Err(Error::Config("dilation rates must be >= 1".into()));
        }
        if self.decoder_end_d_rate > self.encoder_d_rate {
            return Err(Error::Config(format!(
                "decoder_end_d_rate {} exceeds encoder_d_rate {}",
                self.decoder_end_d_rate, self.encoder_d_rate
            )));
        }
        self.loss_weights.validate()?;
        self.check_input(self.input_size.0, self.input_size.1)
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Shape error unless both extents are positive multiples of `2^levels`.
    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let div = 1usize << self.levels;
        if h == 0 || w == 0 || h % div != 0 || w % div != 0 {
            return Err(Error::Shape(format!(
                "input {h}x{w} is not a positive multiple of 2^{} = {div}",
                self.levels
            )));
        }
        Ok(())
    }
}

/// Shared encoder, lung and infection decoders, and the fusion head.
#[derive(Debug, Clone)]
pub struct BifurcatedModel {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub lung_decoder: Decoder,
    pub infection_decoder: Decoder,
    pub fcn: FcnHead,
    pub params: ParameterSet<f32>,
}

/// Node handles produced by [`BifurcatedModel::forward`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelOutputs {
    pub lung: NodeId,
    /// Infection decoder output; the same node feeds the fusion head.
    pub aux: NodeId,
    pub fin: NodeId,
    pub lung_binary: NodeId,
    pub gated: NodeId,
    pub encoder: EncoderOutput,
}

/// Plain tensors from [`BifurcatedModel::predict`].
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub lung: Tensor<f32>,
    pub aux: Tensor<f32>,
    pub fin: Tensor<f32>,
}

impl BifurcatedModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut b = ParamBuilder::new(seed);
        let base = config.base_channels;
        let encoder = Encoder::build(&mut b, config.levels, base, config.encoder_d_rate)?;
        let lung_decoder =
            Decoder::build(&mut b, "lung", config.levels, base, config.decoder_end_d_rate)?;
        let infection_decoder =
            Decoder::build(&mut b, "infection", config.levels, base, config.decoder_end_d_rate)?;
        let fcn = FcnHead::build(&mut b, config.fcn_channels)?;
        Ok(BifurcatedModel {
            config,
            encoder,
            lung_decoder,
            infection_decoder,
            fcn,
            params: b.params,
        })
    }

    /// Rebuilds the architecture for `config` and adopts `params`, which must
    /// carry exactly the expected names and shapes in order.
    pub fn from_params(config: ModelConfig, params: ParameterSet<f32>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if params.len() != model.params.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter tensors, got {}",
                model.params.len(),
                params.len()
            )));
        }
        for ((en, et), (gn, gt)) in model.params.iter().zip(params.iter()) {
            if en != gn {
                return Err(Error::Contract(format!("expected parameter {en}, found {gn}")));
            }
            if et.shape() != gt.shape() {
                return Err(Error::Contract(format!(
                    "parameter {en} should be {}, found {}",
                    et.shape(),
                    gt.shape()
                )));
            }
            if !gt.all_finite() {
                return Err(Error::Numeric(format!("parameter {en} holds non-finite values")));
            }
        }
        model.params = params;
        Ok(model)
    }

    /// Builds the forward pass on `g`. `nodes` are the bound parameters (see
    /// [`ParameterSet::bind`]), possibly of another precision.
    pub fn forward<T: Element>(
        &self,
        g: &mut Graph<T>,
        nodes: &[NodeId],
        image: NodeId,
        lung_threshold: f64,
    ) -> Result<ModelOutputs> {
        if nodes.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "model has {} parameters but {} nodes were bound",
                self.params.len(),
                nodes.len()
            )));
        }
        let s = g.value(image).shape();
        if s.c != 1 {
            return Err(Error::Shape(format!("image must have one channel, got {s}")));
        }
        self.config.check_input(s.h, s.w)?;
        let encoder = self.encoder.forward(g, nodes, image)?;
        let lung = self.lung_decoder.forward(g, nodes, &encoder)?;
        let aux = self.infection_decoder.forward(g, nodes, &encoder)?;
        let bin = g.binarize(lung, lung_threshold)?;
        let lung_binary = g.stop_gradient(bin)?;
        let f = self.fcn.forward(g, nodes, image, aux, lung_binary)?;
        Ok(ModelOutputs {
            lung,
            aux,
            fin: f.prob,
            lung_binary,
            gated: f.gated,
            encoder,
        })
    }

    /// Inference without gradients.
    pub fn predict(&self, images: &Tensor<f32>, lung_threshold: f64) -> Result<Prediction> {
        let mut g = Graph::new();
        let nodes = self.params.bind(&mut g, false);
        let img = g.constant(images.clone());
        let out = self.forward(&mut g, &nodes, img, lung_threshold)?;
        Ok(Prediction {
            lung: g.value(out.lung).clone(),
            aux: g.value(out.aux).clone(),
            fin: g.value(out.fin).clone(),
        })
    }
}
