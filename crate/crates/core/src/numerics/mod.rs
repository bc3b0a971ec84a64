//! Differentiable array operations used by the model.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_check, GradCheck};
pub use tape::{Mask, Mode, Tape, Var};
pub use tensor::Tensor;
