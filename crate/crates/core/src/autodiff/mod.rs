//! Reverse-mode differentiation over the tensor kernels.

mod gradcheck;
mod graph;
mod params;

pub use gradcheck::{analytic_gradient, compare, grad_check, grad_check_at, numeric_gradient, GradCheckReport};
pub use graph::{binarize, Graph, NodeId, BCE_EPS};
pub use params::ParameterSet;
