//! Reverse-mode automatic differentiation over dense `f64` tensors, the
//! layers built on it, the Adam optimizer and the checkpoint container.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod nn;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use nn::{lstm_step, Linear, LstmCell, LstmCellParams};
pub use params::{ParamGrads, ParamSet};
pub use tape::{Bound, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum AdError {
    #[error("dimension error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value produced by {op} (node {node})")]
    NonFinite { op: &'static str, node: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("missing gradient for parameter `{0}`")]
    MissingGrad(String),
}
