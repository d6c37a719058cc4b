//! Dense tensors and a reverse-mode differentiation tape.

mod check;
mod tape;
mod tensor;

pub use check::finite_diff_check;
pub use tape::{Dims, Gradients, Tape, Var};
pub use tensor::Tensor;
