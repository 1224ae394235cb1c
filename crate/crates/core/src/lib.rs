pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradsuite;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};
