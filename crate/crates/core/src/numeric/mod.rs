//! Minimal dense numerics: tensors, forward kernels, a reverse-mode tape,
//! momentum SGD and a binary checkpoint format.

pub mod checkpoint;
pub mod ops;
mod params;
mod tape;
mod tensor;

pub use checkpoint::CheckpointKind;
pub use ops::{affine_forward, relu, sigmoid, sigmoid_scalar, softmax_logprobs};
pub use params::{ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
