//! Dense tensors, reverse-mode gradients and real Fourier transforms.

mod fft;
mod gradcheck;
mod param;
mod real;
mod tape;
mod tensor;

pub use fft::{bins_for, irdft, low_pass, rdft};
pub use gradcheck::{finite_diff, finite_diff_grad, max_rel_error};
pub use param::{Allocator, Init, Initializer, ParamId, ParamStore, Parameter, ShapeCounter};
pub use real::Real;
pub use tape::{Gradients, Tape, Var};
pub use tensor::{gelu, layer_norm, softmax, Tensor, LAYER_NORM_EPS};

#[cfg(test)]
mod tests;
