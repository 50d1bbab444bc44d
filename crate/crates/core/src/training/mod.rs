//! Backpropagation through time, optimizers, gradient verification, and the
//! epoch loop.

mod backprop;
mod gradcheck;
mod optim;
mod trainer;

pub use backprop::{loss_and_gradients, loss_and_gradients_with, BatchOutcome, GradientSet};
pub use gradcheck::{check_gradient, grad_check, relative_error, tiny_problem, GradCheckReport, TinySpec, DEFAULT_EPSILON, MAX_FULL_CHECK};
pub use optim::{adam_step, clip_global_norm, sgd_step, AdamState, Optimizer, OptimizerKind, SgdState};
pub use trainer::{evaluate_split, train, train_with_observer, EpochStats, Evaluation, TrainConfig, TrainReport};
