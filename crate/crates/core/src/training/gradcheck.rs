use alloc::vec::Vec;

use crate::adapters::Adapter;
use crate::error::Result;
use crate::linalg::Matrix;
use crate::training::loss::mse_loss;

/// Central differences `(f(t + eps e_i) - f(t - eps e_i)) / 2 eps` for every
/// coordinate of `params`.
pub fn finite_diff_grad<F>(mut loss_fn: F, params: &[f64], eps: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut theta = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + eps;
        let plus = loss_fn(&theta);
        theta[i] = orig - eps;
        let minus = loss_fn(&theta);
        theta[i] = orig;
        grad.push((plus - minus) / (2.0 * eps));
    }
    grad
}

/// `|a - b| / max(|a|, |b|, 1e-6)`. The floor keeps exactly-zero gradients
/// from turning round-off into unbounded relative error.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Worst relative error over every trainable entry.
    pub max_rel_error: f64,
    /// Worst relative error over the input gradient.
    pub max_rel_error_input: f64,
    pub checked: usize,
}

impl GradCheck {
    pub fn worst(&self) -> f64 {
        self.max_rel_error.max(self.max_rel_error_input)
    }
}

/// Compares the analytic backward pass against central differences of the
/// MSE loss `mse(forward(w, x), target)`, entry by entry.
pub fn check_adapter_gradients<A>(
    adapter: &A,
    w: &Matrix,
    x: &Matrix,
    target: &Matrix,
    eps: f64,
) -> Result<GradCheck>
where
    A: Adapter + Clone,
{
    let (pred, cache) = adapter.forward(w, x)?;
    let (_, dpred) = mse_loss(&pred, target)?;
    let grads = adapter.backward(w, &cache, &dpred)?;

    let mut max_rel = 0.0f64;
    let mut checked = 0;
    let mut probe = adapter.clone();
    for (idx, analytic) in grads.params.iter().enumerate() {
        let start = adapter.trainable()[idx].as_slice().to_vec();
        let numeric = finite_diff_grad(
            |theta| {
                probe.trainable_mut()[idx].as_mut_slice().copy_from_slice(theta);
                let (p, _) = probe.forward(w, x).expect("shapes checked above");
                mse_loss(&p, target).expect("shapes checked above").0
            },
            &start,
            eps,
        );
        probe.trainable_mut()[idx].as_mut_slice().copy_from_slice(&start);
        for (a, n) in analytic.as_slice().iter().zip(&numeric) {
            max_rel = max_rel.max(relative_error(*a, *n));
            checked += 1;
        }
    }

    let numeric_dx = finite_diff_grad(
        |theta| {
            let xx = Matrix::new(x.rows(), x.cols(), theta.to_vec()).expect("same shape");
            let (p, _) = adapter.forward(w, &xx).expect("shapes checked above");
            mse_loss(&p, target).expect("shapes checked above").0
        },
        x.as_slice(),
        eps,
    );
    let max_rel_input = grads
        .dx
        .as_slice()
        .iter()
        .zip(&numeric_dx)
        .fold(0.0f64, |m, (a, n)| m.max(relative_error(*a, *n)));

    Ok(GradCheck {
        max_rel_error: max_rel,
        max_rel_error_input: max_rel_input,
        checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::{LoraAdapter, NoraAdapter};
    use crate::rng::{gaussian_matrix, seeded};

    #[test]
    fn quadratic() {
        let g = finite_diff_grad(|t| t[0] * t[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn linear_is_exact() {
        let g = finite_diff_grad(|t| 2.0 * t[0] - 0.5 * t[1] + 1.0, &[0.25, -0.5], 0.125);
        assert_eq!(g, alloc::vec![2.0, -0.5]);
    }

    #[test]
    fn nora_random_instance() {
        let mut rng = seeded(31);
        let w = gaussian_matrix(&mut rng, 10, 8, 1.0);
        let x = gaussian_matrix(&mut rng, 8, 4, 1.0);
        let t = gaussian_matrix(&mut rng, 10, 4, 1.0);
        let ad = NoraAdapter::from_weight(&w, 5, 2, 1.0).unwrap();
        let report = check_adapter_gradients(&ad, &w, &x, &t, 1e-5).unwrap();
        assert_eq!(report.checked, 2 * 5 * 2);
        assert!(report.worst() < 1e-5, "{report:?}");
    }

    #[test]
    fn lora_random_instance() {
        let mut rng = seeded(32);
        let w = gaussian_matrix(&mut rng, 7, 6, 1.0);
        let x = gaussian_matrix(&mut rng, 6, 3, 1.0);
        let t = gaussian_matrix(&mut rng, 7, 3, 1.0);
        let mut ad = LoraAdapter::init(7, 6, 3, 5, 0.8).unwrap();
        *ad.trainable_mut()[1] = gaussian_matrix(&mut rng, 7, 3, 1.0);
        let report = check_adapter_gradients(&ad, &w, &x, &t, 1e-5).unwrap();
        assert_eq!(report.checked, 3 * 6 + 7 * 3);
        assert!(report.worst() < 1e-5, "{report:?}");
    }
}
