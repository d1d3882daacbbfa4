//! Dense tensors, reverse-mode autodiff, optimizers and seeded randomness.

mod params;
mod rng;
mod tape;
mod tensor;

pub use params::{grad_step, Direction, Optimizer, OptimizerKind, ParamSet};
pub use rng::{derive_seed, Rng, RngState};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{compensated_sum, log_softmax, softmax, Tensor};

pub(crate) use tensor::{affine_row, log_softmax_in_place, sigmoid, softmax_in_place};
