//! Dense tensors, attention and convolution kernels, reverse-mode
//! differentiation, and central-difference gradient checking.

mod gradcheck;
mod ops;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, rel_error, GradCheckReport};
pub use ops::{conv2d_3x3, conv2d_3x3_batched, matmul, scaled_dot_attention, softmax_lastdim};
pub use tape::{Grads, Graph, Var};
pub use tensor::{compensated_sum, Tensor};
