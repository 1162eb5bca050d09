use alloc::vec::Vec;

use crate::error::{NoraError, Result};
use crate::linalg::Matrix;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    Mse,
    /// Softmax cross-entropy over the rows of each column. Targets are turned
    /// into soft labels with a column-wise softmax first.
    CrossEntropy,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::CrossEntropy => "cross_entropy",
        }
    }

    /// Loss and its gradient with respect to `pred`.
    pub fn compute(self, pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
        match self {
            LossKind::Mse => mse_loss(pred, target),
            LossKind::CrossEntropy => softmax_cross_entropy(pred, &softmax_columns(target)),
        }
    }
}

/// Mean squared error over all entries, with `dpred = 2 (pred - target) / count`.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() {
        return Err(NoraError::shape("mse_loss", pred.shape(), target.shape()));
    }
    let count = pred.len().max(1) as f64;
    let diff = pred.sub(target)?;
    let loss = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / count;
    Ok((loss, diff.scale(2.0 / count)))
}

pub fn softmax_columns(logits: &Matrix) -> Matrix {
    let (rows, cols) = logits.shape();
    let mut out = Matrix::zeros(rows, cols);
    for j in 0..cols {
        let col: Vec<f64> = logits.column(j);
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = col.iter().map(|&v| math::exp(v - max)).collect();
        let total: f64 = exps.iter().sum();
        for (i, e) in exps.iter().enumerate() {
            out[(i, j)] = e / total;
        }
    }
    out
}

/// Mean over columns of `-sum_i t_i log softmax(z)_i`; `target` columns must be
/// probability vectors.
pub fn softmax_cross_entropy(logits: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if logits.shape() != target.shape() {
        return Err(NoraError::shape("softmax_cross_entropy", logits.shape(), target.shape()));
    }
    let (rows, cols) = logits.shape();
    let batch = cols.max(1) as f64;
    let probs = softmax_columns(logits);
    let mut loss = 0.0;
    for j in 0..cols {
        let col = logits.column(j);
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + math::ln(col.iter().map(|&v| math::exp(v - max)).sum::<f64>());
        for i in 0..rows {
            loss -= target[(i, j)] * (col[i] - lse);
        }
    }
    let grad = probs.sub(target)?.scale(1.0 / batch);
    Ok((loss / batch, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, seeded};
    use crate::training::finite_diff_grad;

    #[test]
    fn mse_zero_at_target() {
        let mut rng = seeded(1);
        let t = gaussian_matrix(&mut rng, 3, 4, 1.0);
        let (l, g) = mse_loss(&t, &t).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn mse_unit_offset() {
        let mut rng = seeded(2);
        let t = gaussian_matrix(&mut rng, 3, 4, 1.0);
        let (l, _) = mse_loss(&t.map(|v| v + 1.0), &t).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mse_descent_direction() {
        let mut rng = seeded(3);
        let p = gaussian_matrix(&mut rng, 5, 6, 1.0);
        let t = gaussian_matrix(&mut rng, 5, 6, 1.0);
        let (l0, g) = mse_loss(&p, &t).unwrap();
        let mut stepped = p.clone();
        stepped.axpy(-1e-3, &g).unwrap();
        let (l1, _) = mse_loss(&stepped, &t).unwrap();
        assert!(l1 < l0);
    }

    #[test]
    fn mse_shape_error() {
        assert!(mse_loss(&Matrix::zeros(2, 3), &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = seeded(4);
        let z = gaussian_matrix(&mut rng, 4, 3, 1.0);
        let t = softmax_columns(&gaussian_matrix(&mut rng, 4, 3, 1.0));
        let (_, g) = softmax_cross_entropy(&z, &t).unwrap();
        let fd = finite_diff_grad(
            |theta| {
                let zz = Matrix::new(4, 3, theta.to_vec()).unwrap();
                softmax_cross_entropy(&zz, &t).unwrap().0
            },
            z.as_slice(),
            1e-5,
        );
        for (a, n) in g.as_slice().iter().zip(&fd) {
            assert!((a - n).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_columns_sum_to_one() {
        let mut rng = seeded(5);
        let p = softmax_columns(&gaussian_matrix(&mut rng, 6, 4, 10.0));
        for j in 0..4 {
            let s: f64 = p.column(j).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
