//! Dense row-major `f64` tensors and a recorded computation graph with
//! reverse-mode differentiation, sized for the small alignment and decoder
//! networks in this workspace.

mod checkpoint;
mod error;
mod gradcheck;
mod graph;
mod kernels;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, MAGIC, VERSION};
pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, Primitive};
pub use graph::{softmax_in_place, Graph, Var, LAYER_NORM_EPS};
pub use tensor::{ParamStore, Tensor};
