use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::adapters::Adapter;
use crate::error::{NoraError, Result};
use crate::linalg::Matrix;
use crate::rng::seeded;
use crate::training::loss::LossKind;
use crate::training::optim::{AdamParams, AdamState, Optimizer, OptimizerKind};
use crate::training::task::ToyTask;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Drives minibatch sampling.
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 500,
            batch: 32,
            lr: 1e-2,
            optimizer: OptimizerKind::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            loss: LossKind::Mse,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &'static str, reason| Err(NoraError::Invalid { what, reason });
        if self.steps == 0 {
            return bad("steps", "must be positive".into());
        }
        if self.batch == 0 {
            return bad("batch", "must be positive".into());
        }
        // lr = 0 is allowed: it yields a flat history, which is a useful baseline.
        if !self.lr.is_finite() || self.lr < 0.0 {
            return bad("lr", format!("{} must be finite and >= 0", self.lr));
        }
        for (what, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(what, format!("{b} not in [0, 1)"));
            }
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad("adam_eps", format!("{} must be > 0", self.adam_eps));
        }
        Ok(())
    }

    fn optimizer(&self, params: &[&Matrix]) -> Optimizer {
        match self.optimizer {
            OptimizerKind::Sgd => Optimizer::Sgd { lr: self.lr },
            OptimizerKind::Adam => Optimizer::Adam {
                params: AdamParams {
                    lr: self.lr,
                    beta1: self.adam_beta1,
                    beta2: self.adam_beta2,
                    eps: self.adam_eps,
                },
                state: AdamState::new(params),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    /// Full-dataset loss before the first step.
    pub initial_loss: f64,
    /// Full-dataset loss after each step; `losses.len() == steps`.
    pub losses: Vec<f64>,
    /// Trainable parameters at exit, in `Adapter::trainable` order.
    pub final_params: Vec<Matrix>,
    /// Fingerprint of the frozen factors, identical at entry and exit.
    pub frozen_fingerprint: u64,
    /// Filled in by callers that have a clock; always 0 here.
    pub wall_time_secs: f64,
}

impl TrainHistory {
    pub fn final_loss(&self) -> f64 {
        self.losses.last().copied().unwrap_or(self.initial_loss)
    }
}

/// Full-dataset MSE of the adapted layer on `task`. Does not mutate anything.
pub fn evaluate<A: Adapter>(adapter: &A, base: &Matrix, task: &ToyTask) -> Result<f64> {
    evaluate_with(adapter, base, task, LossKind::Mse)
}

pub fn evaluate_with<A: Adapter>(adapter: &A, base: &Matrix, task: &ToyTask, loss: LossKind) -> Result<f64> {
    let (pred, _) = adapter.forward(base, &task.inputs)?;
    Ok(loss.compute(&pred, &task.targets)?.0)
}

/// Minibatch training of the adapter's trainable factors against `task`.
///
/// `base` is the frozen weight the adapter sits on: `task.w_base` for the
/// literal initialization, or the residual weight from a residual init.
/// Minibatches are drawn without replacement from seeded permutations of the
/// samples. Frozen factors are fingerprinted before and after; a mismatch is
/// reported as [`NoraError::FreezeViolation`].
pub fn train_adapter<A: Adapter>(
    adapter: &mut A,
    base: &Matrix,
    task: &ToyTask,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if base.shape() != adapter.dims() {
        return Err(NoraError::shape("train_adapter (base)", adapter.dims(), base.shape()));
    }
    if task.w_base.shape() != base.shape() {
        return Err(NoraError::shape("train_adapter (task)", base.shape(), task.w_base.shape()));
    }
    let samples = task.inputs.cols();
    if cfg.batch > samples {
        return Err(NoraError::range("batch", cfg.batch, 1, samples));
    }

    let frozen = adapter.frozen_fingerprint();
    let initial_loss = evaluate_with(adapter, base, task, cfg.loss)?;
    if !initial_loss.is_finite() {
        return Err(NoraError::Divergence {
            step: 0,
            loss: initial_loss,
        });
    }

    let mut rng = seeded(cfg.seed);
    let mut order: Vec<usize> = (0..samples).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut opt = cfg.optimizer(&adapter.trainable());
    let mut losses = Vec::with_capacity(cfg.steps);

    for step in 1..=cfg.steps {
        if cursor + cfg.batch > samples {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + cfg.batch];
        cursor += cfg.batch;
        let x = task.inputs.select_columns(idx);
        let target = task.targets.select_columns(idx);

        let (pred, cache) = adapter.forward(base, &x)?;
        let (batch_loss, dpred) = cfg.loss.compute(&pred, &target)?;
        if !batch_loss.is_finite() {
            return Err(NoraError::Divergence { step, loss: batch_loss });
        }
        let grads = adapter.backward(base, &cache, &dpred)?;
        opt.step(&mut adapter.trainable_mut(), &grads.params)?;

        let loss = evaluate_with(adapter, base, task, cfg.loss)?;
        if !loss.is_finite() {
            return Err(NoraError::Divergence { step, loss });
        }
        losses.push(loss);
    }

    if adapter.frozen_fingerprint() != frozen {
        return Err(NoraError::FreezeViolation);
    }
    Ok(TrainHistory {
        initial_loss,
        losses,
        final_params: adapter.trainable().into_iter().cloned().collect(),
        frozen_fingerprint: frozen,
        wall_time_secs: 0.0,
    })
}
