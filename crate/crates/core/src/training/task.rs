use crate::error::{NoraError, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::rng::{gaussian_matrix, seeded, synthetic_weight};

/// Teacher-student regression task with a known rank gap.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTask {
    /// Frozen pre-trained weight, `m x n`.
    pub w_base: Matrix,
    /// Teacher weight, `w_base + P Q`.
    pub w_target: Matrix,
    /// `n x N` samples, one per column.
    pub inputs: Matrix,
    /// `w_target * inputs` plus optional Gaussian noise.
    pub targets: Matrix,
    pub spec: TaskSpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskSpec {
    pub m: usize,
    pub n: usize,
    pub rank_gap: usize,
    pub seed: u64,
    pub samples: usize,
    /// Standard deviation of the label noise; the noise floor of the MSE is its square.
    pub noise_std: f64,
}

impl TaskSpec {
    pub fn new(m: usize, n: usize, rank_gap: usize, seed: u64) -> Self {
        TaskSpec {
            m,
            n,
            rank_gap,
            seed,
            samples: 256,
            noise_std: 0.0,
        }
    }

    pub fn generate(&self) -> Result<ToyTask> {
        let (m, n, k) = (self.m, self.n, self.rank_gap);
        if m == 0 || n == 0 {
            return Err(NoraError::range("task dimension", 0, 1, usize::MAX));
        }
        if k > m.min(n) {
            return Err(NoraError::range("rank gap", k, 0, m.min(n)));
        }
        if self.samples == 0 {
            return Err(NoraError::range("samples", 0, 1, usize::MAX));
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(NoraError::Invalid {
                what: "noise_std",
                reason: alloc::format!("{} must be finite and >= 0", self.noise_std),
            });
        }

        // Same generator as `gen:MxN:seed` weights.
        let w_base = synthetic_weight(m, n, self.seed);
        let mut rng = seeded(self.seed ^ 0x5eed_7a5c_0000_0001);
        let w_target = if k == 0 {
            w_base.clone()
        } else {
            let p = gaussian_matrix(&mut rng, m, k, 1.0 / math::sqrt(k as f64));
            let q = gaussian_matrix(&mut rng, k, n, 1.0 / math::sqrt(n as f64));
            w_base.add(&p.matmul(&q)?)?
        };
        let inputs = gaussian_matrix(&mut rng, n, self.samples, 1.0);
        let mut targets = w_target.matmul(&inputs)?;
        if self.noise_std > 0.0 {
            let noise = gaussian_matrix(&mut rng, m, self.samples, self.noise_std);
            targets.axpy(1.0, &noise)?;
        }
        Ok(ToyTask {
            w_base,
            w_target,
            inputs,
            targets,
            spec: *self,
        })
    }
}

/// Rank-gap task with 256 noiseless samples.
pub fn gen_lowrank_task(m: usize, n: usize, rank_gap: usize, seed: u64) -> Result<ToyTask> {
    TaskSpec::new(m, n, rank_gap, seed).generate()
}
