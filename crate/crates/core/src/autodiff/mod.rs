//! Reverse-mode automatic differentiation over dense tensors, the layers the
//! networks are built from, and the Adam optimizer.

mod adam;
pub mod check;
pub mod kernels;
pub mod layers;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use params::{read_tensors, uniform_init, write_tensors, Bound, ParamStore, TENSOR_FORMAT_VERSION};
pub use tape::{Gradients, Tape, Var, MAGNITUDE_EPS};
pub use tensor::Tensor;
