//! A small double-precision tensor engine: dense tensors, a recording graph
//! with reverse-mode gradients, SGD/Adam, and a flat checkpoint format.
//!
//! Convolutions are valid-padding cross-correlations in NCHW layout.

pub mod checkpoint;
mod error;
mod graph;
mod linalg;
pub mod optim;
mod param;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use error::{Result, TensorError};
pub use graph::{ActivationPattern, Graph, Var};
pub use optim::{AdamHyper, Optimizer, OptimizerKind};
pub use param::{ParamId, ParamSet, Parameter};
pub use tensor::Tensor;
