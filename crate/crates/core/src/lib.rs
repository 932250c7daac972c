pub mod autograd;
pub mod cli;
pub mod config;
pub mod data;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod pipeline;
pub mod stability;
pub mod tensor;
pub mod training;

pub use autograd::{Graph, Mask, Var};
pub use tensor::{Tensor, TensorError};
