//! Small reverse-mode automatic differentiation engine over dense `f64`
//! matrices.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, REL_ERR_FLOOR};
pub use tape::{record, DftBasis, Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
