//! Desk-scale training harness: losses, optimizers, synthetic low-rank tasks,
//! a finite-difference gradient oracle and the minibatch training loop.

mod gradcheck;
mod loss;
mod optim;
mod optimum;
mod task;
mod train;

pub use gradcheck::{check_adapter_gradients, finite_diff_grad, relative_error, GradCheck};
pub use loss::{mse_loss, softmax_columns, softmax_cross_entropy, LossKind};
pub use optimum::nora_optimal_loss;
pub use optim::{adam_step, sgd_step, AdamParams, AdamState, Optimizer, OptimizerKind};
pub use task::{gen_lowrank_task, TaskSpec, ToyTask};
pub use train::{evaluate, evaluate_with, train_adapter, TrainConfig, TrainHistory};
