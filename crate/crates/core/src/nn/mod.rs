//! Network blocks and the assembled two-branch segmentation model.
//!
//! Layers hold indices into the model's [`ParameterSet`](crate::autodiff::ParameterSet);
//! forward passes take the bound parameter nodes, so the same model can run
//! in `f32` for training and `f64` for gradient checks.

mod fcn;
mod inception;
mod layers;
mod model;
mod unet;

pub use fcn::{FcnHead, FcnOutput};
pub use inception::{InceptionBlock, InceptionConfig, POOL_BRANCH_WINDOW};
pub use layers::Conv;
pub use model::{BifurcatedModel, ModelConfig, ModelOutputs, Prediction, LUNG_THRESHOLD};
pub use unet::{Decoder, DecoderStage, Encoder, EncoderOutput};
