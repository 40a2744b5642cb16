//! Minimal dense-tensor engine with reverse-mode differentiation.

pub mod checkpoint;
pub mod data;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod optim;
pub mod param;
pub mod scalar;

pub use data::Tensor;
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{GradMap, Graph, NodeId};
pub use optim::{AdamConfig, AdamW};
pub use param::{ParamStore, Parameter};
pub use scalar::{Dtype, Scalar};

#[cfg(test)]
mod tests;
