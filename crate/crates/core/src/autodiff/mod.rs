//! Dense tensors and reverse-mode automatic differentiation.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, GradCheck};
pub use graph::{Graph, Padding, Var, PROB_FLOOR};
pub use tensor::Tensor;
