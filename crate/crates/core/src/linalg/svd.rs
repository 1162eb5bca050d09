use alloc::vec;
use alloc::vec::Vec;

use crate::error::{NoraError, Result};
use crate::linalg::Matrix;
use crate::math;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_SWEEPS: usize = 60;

/// Thin SVD `A = U diag(sigma) Vt` with `k = min(m, n)`.
///
/// `sigma` is non-increasing and non-negative. Signs are canonical: the
/// largest-magnitude entry of every column of `u` (first one on ties) is
/// non-negative, with the matching row of `vt` carrying the compensating sign.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    u: Matrix,
    sigma: Vec<f64>,
    vt: Matrix,
}

impl SvdFactors {
    pub fn new(u: Matrix, sigma: Vec<f64>, vt: Matrix) -> Result<Self> {
        let k = sigma.len();
        if u.cols() != k {
            return Err(NoraError::shape("SvdFactors::new (u, sigma)", u.shape(), (k, 1)));
        }
        if vt.rows() != k {
            return Err(NoraError::shape("SvdFactors::new (sigma, vt)", (k, 1), vt.shape()));
        }
        Ok(SvdFactors { u, sigma, vt })
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn vt(&self) -> &Matrix {
        &self.vt
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn into_parts(self) -> (Matrix, Vec<f64>, Matrix) {
        (self.u, self.sigma, self.vt)
    }

    /// Keeps the leading `k` singular triplets.
    pub fn truncate(&self, k: usize) -> Result<SvdFactors> {
        if k == 0 || k > self.sigma.len() {
            return Err(NoraError::range("truncation rank", k, 1, self.sigma.len()));
        }
        Ok(SvdFactors {
            u: self.u.submatrix(0, self.u.rows(), 0, k),
            sigma: self.sigma[..k].to_vec(),
            vt: self.vt.submatrix(0, k, 0, self.vt.cols()),
        })
    }

    /// `u * diag(sigma) * vt`.
    pub fn reconstruct(&self) -> Matrix {
        let scaled = Matrix::from_fn(self.u.rows(), self.u.cols(), |i, j| self.u[(i, j)] * self.sigma[j]);
        scaled
            .matmul(&self.vt)
            .expect("factor shapes checked at construction")
    }

    /// `(|U^T U - I|_F, |Vt Vt^T - I|_F)`.
    pub fn orthonormality_defect(&self) -> (f64, f64) {
        let k = self.sigma.len();
        let eye = Matrix::identity(k);
        let utu = self.u.transpose().matmul(&self.u).expect("square");
        let vvt = self.vt.matmul(&self.vt.transpose()).expect("square");
        (
            utu.sub(&eye).expect("k x k").frobenius_norm(),
            vvt.sub(&eye).expect("k x k").frobenius_norm(),
        )
    }
}

/// Jacobi SVD with the default tolerance and sweep limit.
pub fn jacobi_svd(a: &Matrix) -> Result<SvdFactors> {
    jacobi_svd_with(a, DEFAULT_TOL, DEFAULT_MAX_SWEEPS)
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Columns of the taller orientation are orthogonalized pairwise with plane
/// rotations until every pair satisfies `|a_p . a_q| <= tol |a_p| |a_q|`.
/// Columns that end up numerically zero get `sigma = 0` and an orthonormal
/// completion built from Gram-Schmidt on the standard basis, so the returned
/// `u` and `vt` always have orthonormal columns/rows.
pub fn jacobi_svd_with(a: &Matrix, tol: f64, max_sweeps: usize) -> Result<SvdFactors> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(NoraError::Invalid {
            what: "svd tolerance",
            reason: alloc::format!("{tol} must be > 0"),
        });
    }
    if max_sweeps == 0 {
        return Err(NoraError::range("max_sweeps", 0, 1, usize::MAX));
    }
    if !a.is_finite() {
        return Err(NoraError::Invalid {
            what: "svd input",
            reason: "matrix has non-finite entries".into(),
        });
    }

    let factors = if a.rows() >= a.cols() {
        let (u, sigma, v) = tall_svd(a, tol, max_sweeps)?;
        SvdFactors {
            u,
            sigma,
            vt: v.transpose(),
        }
    } else {
        // A^T = U' S V'^T  =>  A = V' S U'^T
        let (u_t, sigma, v_t) = tall_svd(&a.transpose(), tol, max_sweeps)?;
        SvdFactors {
            u: v_t,
            sigma,
            vt: u_t.transpose(),
        }
    };
    Ok(canonicalize_signs(factors))
}

/// Column-major scratch: column `j` lives at `data[j * len..(j + 1) * len]`.
struct Columns {
    len: usize,
    data: Vec<f64>,
}

impl Columns {
    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.len..(j + 1) * self.len]
    }

    fn pair_mut(&mut self, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
        debug_assert!(p < q);
        let (head, tail) = self.data.split_at_mut(q * self.len);
        (&mut head[p * self.len..(p + 1) * self.len], &mut tail[..self.len])
    }

    fn rotate(&mut self, p: usize, q: usize, c: f64, s: f64) {
        let (cp, cq) = self.pair_mut(p, q);
        for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
            let xp = *x;
            let xq = *y;
            *x = c * xp - s * xq;
            *y = s * xp + c * xq;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// Returns (U m x n, sigma, V n x n) for m >= n.
fn tall_svd(a: &Matrix, tol: f64, max_sweeps: usize) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let (m, n) = a.shape();
    let mut work = Columns {
        len: m,
        data: a.transpose().into_vec(),
    };
    let mut v = Columns {
        len: n,
        data: Matrix::identity(n).into_vec(),
    };

    let mut converged = n < 2;
    let mut off = 0.0;
    for _ in 0..max_sweeps {
        if converged {
            break;
        }
        off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(work.col(p), work.col(p));
                let beta = dot(work.col(q), work.col(q));
                let gamma = dot(work.col(p), work.col(q));
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let rel = gamma.abs() / (math::sqrt(alpha) * math::sqrt(beta));
                off = off.max(rel);
                if rel <= tol {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let sign = if zeta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (zeta.abs() + math::hypot(1.0, zeta));
                let c = 1.0 / math::hypot(1.0, t);
                let s = c * t;
                work.rotate(p, q, c, s);
                v.rotate(p, q, c, s);
            }
        }
        converged = off <= tol;
    }
    if !converged {
        return Err(NoraError::Convergence {
            sweeps: max_sweeps,
            off_diagonal: off,
        });
    }

    let norms: Vec<f64> = (0..n).map(|j| math::sqrt(dot(work.col(j), work.col(j)))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps equal singular values in original column order.
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));

    let sigma_max = norms[order[0]];
    let zero_cutoff = f64::EPSILON * m as f64 * sigma_max;

    let mut sigma = vec![0.0; n];
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        let s = norms[j];
        if s > zero_cutoff && s > 0.0 {
            sigma[slot] = s;
            u_cols.push(work.col(j).iter().map(|x| x / s).collect());
        } else {
            pending.push(slot);
            u_cols.push(Vec::new());
        }
    }
    complete_orthonormal(&mut u_cols, &pending, m);

    let u = Matrix::from_fn(m, n, |i, j| u_cols[j][i]);
    let v_mat = Matrix::from_fn(n, n, |i, j| v.col(order[j])[i]);
    Ok((u, sigma, v_mat))
}

// Fills the empty columns listed in `pending` with unit vectors orthogonal to
// every other filled column, drawn from the standard basis in index order.
fn complete_orthonormal(cols: &mut [Vec<f64>], pending: &[usize], len: usize) {
    let mut candidate = 0;
    for &slot in pending {
        loop {
            assert!(candidate < len, "ran out of basis vectors for completion");
            let mut e = vec![0.0; len];
            e[candidate] = 1.0;
            candidate += 1;
            // Two passes of modified Gram-Schmidt.
            for _ in 0..2 {
                for other in cols.iter().filter(|c| !c.is_empty()) {
                    let proj = dot(&e, other);
                    for (x, o) in e.iter_mut().zip(other) {
                        *x -= proj * o;
                    }
                }
            }
            let norm = math::sqrt(dot(&e, &e));
            if norm > 0.5 / math::sqrt(len as f64) {
                for x in &mut e {
                    *x /= norm;
                }
                cols[slot] = e;
                break;
            }
        }
    }
}

fn canonicalize_signs(mut f: SvdFactors) -> SvdFactors {
    let (m, k) = f.u.shape();
    for j in 0..k {
        let mut best = 0;
        let mut best_abs = -1.0;
        for i in 0..m {
            let a = f.u[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if f.u[(best, j)] < 0.0 {
            for i in 0..m {
                f.u[(i, j)] = -f.u[(i, j)];
            }
            for c in 0..f.vt.cols() {
                f.vt[(j, c)] = -f.vt[(j, c)];
            }
        }
    }
    f
}

/// Number of singular values above `rel_tol * sigma_1`.
pub fn numerical_rank(a: &Matrix, rel_tol: f64) -> Result<usize> {
    let f = jacobi_svd(a)?;
    let top = f.sigma.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(f.sigma.iter().filter(|&&s| s > rel_tol * top).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, seeded};

    fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / a.frobenius_norm().max(1e-30)
    }

    fn check(a: &Matrix) -> SvdFactors {
        let f = jacobi_svd(a).unwrap();
        assert!(rel_err(a, &f.reconstruct()) < 1e-10, "reconstruction");
        let (du, dv) = f.orthonormality_defect();
        assert!(du < 1e-10 && dv < 1e-10, "orthonormality {du} {dv}");
        assert!(f.sigma.windows(2).all(|w| w[0] >= w[1]));
        assert!(f.sigma.iter().all(|&s| s >= 0.0));
        f
    }

    #[test]
    fn diagonal_input() {
        let f = check(&Matrix::from_diag(&[3.0, 2.0, 1.0]));
        assert_eq!(f.sigma(), &[3.0, 2.0, 1.0]);
        assert_eq!(f.u(), &Matrix::identity(3));
        assert_eq!(f.vt(), &Matrix::identity(3));
    }

    #[test]
    fn permuted_diagonal() {
        let f = check(&Matrix::from_rows(&[[0.0, 2.0], [1.0, 0.0]]));
        assert_eq!(f.sigma(), &[2.0, 1.0]);
    }

    #[test]
    fn random_tall_and_wide() {
        let mut rng = seeded(11);
        let tall = gaussian_matrix(&mut rng, 8, 5, 1.0);
        let f = check(&tall);
        assert_eq!((f.u().shape(), f.vt().shape()), ((8, 5), (5, 5)));
        let wide = gaussian_matrix(&mut rng, 5, 7, 1.0);
        let f = check(&wide);
        assert_eq!((f.u().shape(), f.vt().shape()), ((5, 5), (5, 7)));
    }

    #[test]
    fn zero_and_rank_deficient() {
        let f = check(&Matrix::zeros(4, 3));
        assert!(f.sigma().iter().all(|&s| s == 0.0));
        let mut rng = seeded(12);
        let p = gaussian_matrix(&mut rng, 9, 2, 1.0);
        let q = gaussian_matrix(&mut rng, 2, 6, 1.0);
        let f = check(&p.matmul(&q).unwrap());
        assert!(f.sigma()[2] < 1e-12 * f.sigma()[0]);
    }

    #[test]
    fn repeated_singular_values() {
        let mut rng = seeded(13);
        let q1 = jacobi_svd(&gaussian_matrix(&mut rng, 6, 6, 1.0)).unwrap();
        let q2 = jacobi_svd(&gaussian_matrix(&mut rng, 6, 6, 1.0)).unwrap();
        let a = q1
            .u()
            .matmul(&Matrix::from_diag(&[2.0, 2.0, 2.0, 1.0, 1.0, 0.0]))
            .unwrap()
            .matmul(q2.vt())
            .unwrap();
        let f = check(&a);
        for (s, e) in f.sigma().iter().zip([2.0, 2.0, 2.0, 1.0, 1.0, 0.0]) {
            assert!((s - e).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_convention() {
        let mut rng = seeded(14);
        let f = check(&gaussian_matrix(&mut rng, 6, 4, 1.0));
        for j in 0..4 {
            let col = f.u().column(j);
            let max = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let first = col.iter().find(|v| v.abs() == max).unwrap();
            assert!(*first >= 0.0);
        }
    }

    #[test]
    fn deterministic() {
        let mut rng = seeded(15);
        let a = gaussian_matrix(&mut rng, 10, 7, 1.0);
        let f1 = jacobi_svd(&a).unwrap();
        let f2 = jacobi_svd(&a).unwrap();
        assert!(f1.u().bit_eq(f2.u()) && f1.vt().bit_eq(f2.vt()));
        assert!(f1.sigma().iter().zip(f2.sigma()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncate_cases() {
        let f = jacobi_svd(&Matrix::from_diag(&[3.0, 2.0, 1.0])).unwrap();
        assert_eq!(f.truncate(3).unwrap(), f);
        assert_eq!(f.truncate(2).unwrap().sigma(), &[3.0, 2.0]);
        assert!(matches!(f.truncate(0), Err(NoraError::Range { .. })));
        assert!(matches!(f.truncate(4), Err(NoraError::Range { .. })));
    }

    #[test]
    fn eckart_young_tail_energy() {
        let mut rng = seeded(16);
        let a = gaussian_matrix(&mut rng, 6, 6, 1.0);
        let f = jacobi_svd(&a).unwrap();
        let approx = f.truncate(2).unwrap().reconstruct();
        let err2 = a.sub(&approx).unwrap().frobenius_norm().powi(2);
        let tail: f64 = f.sigma()[2..].iter().map(|s| s * s).sum();
        assert!((err2 - tail).abs() < 1e-9);
        assert!(numerical_rank(&approx, 1e-8).unwrap() <= 2);
    }

    #[test]
    fn reconstruct_identity_factors() {
        let f = SvdFactors::new(Matrix::identity(3), alloc::vec![5.0, 4.0, 0.5], Matrix::identity(3)).unwrap();
        assert_eq!(f.reconstruct(), Matrix::from_diag(&[5.0, 4.0, 0.5]));
        assert!(SvdFactors::new(Matrix::identity(3), alloc::vec![1.0; 2], Matrix::identity(3)).is_err());
    }

    #[test]
    fn rejects_bad_arguments() {
        let a = Matrix::identity(2);
        assert!(jacobi_svd_with(&a, 0.0, 10).is_err());
        assert!(jacobi_svd_with(&a, 1e-12, 0).is_err());
        let mut bad = a.clone();
        bad[(0, 1)] = f64::NAN;
        assert!(jacobi_svd(&bad).is_err());
    }

    #[test]
    fn reports_non_convergence() {
        let mut rng = seeded(17);
        let a = gaussian_matrix(&mut rng, 12, 10, 1.0);
        match jacobi_svd_with(&a, 1e-15, 1) {
            Err(NoraError::Convergence { sweeps, off_diagonal }) => {
                assert_eq!(sweeps, 1);
                assert!(off_diagonal > 1e-15);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }
}
