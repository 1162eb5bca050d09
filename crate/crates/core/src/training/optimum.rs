use alloc::vec::Vec;

use crate::adapters::{Adapter, NoraAdapter};
use crate::error::Result;
use crate::linalg::{jacobi_svd, Matrix};
use crate::training::task::ToyTask;

/// Lowest full-dataset MSE any setting of the inner factors can reach on
/// `task`, given the adapter's frozen outer factors and inner rank.
///
/// With `R = targets - W X`, `Z = Vt_r X` and `U_r` orthonormal, the loss
/// splits into `|(I - U_r U_r^T) R|^2`, which no inner update can touch, plus
/// the reduced-rank regression `min_{rank M <= r_in} |U_r^T R - M Z|^2`. The
/// latter is solved by projecting the least-squares fit onto its leading
/// `r_in` left singular vectors. Assumes `scale != 0`.
pub fn nora_optimal_loss(adapter: &NoraAdapter, base: &Matrix, task: &ToyTask) -> Result<f64> {
    let residual = task.targets.sub(&base.matmul(&task.inputs)?)?;
    let u = adapter.u_r();
    let y = u.transpose().matmul(&residual)?;
    let z = adapter.vt_r().matmul(&task.inputs)?;

    let gram = z.matmul(&z.transpose())?;
    let m_ols = y.matmul(&z.transpose())?.matmul(&pseudo_inverse(&gram)?)?;
    let fitted = m_ols.matmul(&z)?;
    let lead = jacobi_svd(&fitted)?.truncate(adapter.r_in())?;
    let proj = lead.u().matmul(&lead.u().transpose())?;
    let best = u.matmul(&proj.matmul(&fitted)?)?;

    let err = residual.sub(&best)?;
    let (m, _) = adapter.dims();
    Ok(err.as_slice().iter().map(|v| v * v).sum::<f64>() / (m * task.inputs.cols()) as f64)
}

fn pseudo_inverse(a: &Matrix) -> Result<Matrix> {
    let f = jacobi_svd(a)?;
    let top = f.sigma().first().copied().unwrap_or(0.0);
    let inv: Vec<f64> = f
        .sigma()
        .iter()
        .map(|&s| if s > 1e-12 * top { 1.0 / s } else { 0.0 })
        .collect();
    f.vt()
        .transpose()
        .matmul(&Matrix::from_diag(&inv))?
        .matmul(&f.u().transpose())
}
