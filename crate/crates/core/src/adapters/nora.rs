use alloc::vec;
use alloc::vec::Vec;

use crate::adapters::{check_base, fingerprint, Adapter, Gradients};
use crate::error::{NoraError, Result};
use crate::linalg::{jacobi_svd, Matrix};
use crate::math;

/// Nested LoRA: `delta = scale * U_r B' A' Vt_r`.
///
/// `U_r` (`m x r_out`) and `Vt_r` (`r_out x n`) are the leading singular
/// vectors of the base weight and stay frozen. The inner pair
/// `B'` (`r_out x r_in`) and `A'` (`r_in x r_out`) is all that trains, so the
/// trainable count is `2 r_out r_in` regardless of `m` and `n`.
///
/// Factors are named by position. The original write-up calls the outer
/// factors `A = U_r` and `B = V_r^T`, which is the reverse of plain LoRA's
/// `B A` shape order.
#[derive(Debug, Clone, PartialEq)]
pub struct NoraAdapter {
    u_r: Matrix,
    vt_r: Matrix,
    b_inner: Matrix,
    a_inner: Matrix,
    scale: f64,
    residual_init: bool,
}

/// How the inner factors are cut out of `sqrt(Sigma_r)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnerSlicing {
    /// First `r_in` columns for `B'`, first `r_in` rows for `A'`.
    #[default]
    LeadingRank,
    /// Width `r_out / r_in` (integer division), as in the reference PyTorch
    /// listing. The resulting adapter has inner rank `r_out / r_in`.
    ReferenceListing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoraConfig {
    pub scale: f64,
    /// Subtract the initial delta from the base weight so the adapted layer
    /// computes exactly `W x` at step 0.
    pub residual: bool,
    pub slicing: InnerSlicing,
}

impl Default for NoraConfig {
    fn default() -> Self {
        NoraConfig {
            scale: 1.0,
            residual: false,
            slicing: InnerSlicing::LeadingRank,
        }
    }
}

/// Result of [`NoraAdapter::init`]: the adapter and the base weight it must be
/// paired with (`W` itself, or `W - delta_init` in residual mode).
#[derive(Debug, Clone, PartialEq)]
pub struct NoraInit {
    pub adapter: NoraAdapter,
    pub base: Matrix,
}

#[derive(Debug, Clone)]
pub struct NoraCache {
    pub x: Matrix,
    /// `Vt_r x`, shape `r_out x batch`.
    pub z1: Matrix,
    /// `A' z1`, shape `r_in x batch`.
    pub z2: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoraGrads {
    pub db_inner: Matrix,
    pub da_inner: Matrix,
    pub dx: Matrix,
}

impl NoraAdapter {
    /// SVD initialization with default options (no residual, leading-rank slicing).
    pub fn from_weight(w: &Matrix, r_out: usize, r_in: usize, scale: f64) -> Result<NoraAdapter> {
        let cfg = NoraConfig {
            scale,
            ..NoraConfig::default()
        };
        Ok(Self::init(w, r_out, r_in, &cfg)?.adapter)
    }

    /// Outer factors from the truncated SVD of `w`, inner factors from the
    /// square roots of the leading singular values. At initialization
    /// `B' A' = diag(sigma_1, .., sigma_{r_in}, 0, .., 0)`, so the delta is the
    /// best rank-`r_in` approximation of `w` (times `scale`).
    pub fn init(w: &Matrix, r_out: usize, r_in: usize, cfg: &NoraConfig) -> Result<NoraInit> {
        let (m, n) = w.shape();
        let max = m.min(n);
        if r_out == 0 || r_out > max {
            return Err(NoraError::range("outer rank", r_out, 1, max));
        }
        if r_in == 0 || r_in > r_out {
            return Err(NoraError::range("inner rank", r_in, 1, r_out));
        }

        let svd = jacobi_svd(w)?.truncate(r_out)?;
        let sigma = svd.sigma();
        if sigma[0] > 0.0 && sigma[r_out - 1] < 1e-12 * sigma[0] {
            log::warn!(
                "degenerate spectrum: sigma_{r_out} = {:e} is below 1e-12 * sigma_1",
                sigma[r_out - 1]
            );
        }
        let root: Vec<f64> = sigma.iter().map(|&s| math::sqrt(s)).collect();
        let sqrt_sigma = Matrix::from_diag(&root);

        let width = match cfg.slicing {
            InnerSlicing::LeadingRank => r_in,
            InnerSlicing::ReferenceListing => r_out / r_in,
        };
        let b_inner = sqrt_sigma.submatrix(0, r_out, 0, width);
        let a_inner = sqrt_sigma.submatrix(0, width, 0, r_out);
        let (u_r, _, vt_r) = svd.into_parts();

        let adapter = NoraAdapter {
            u_r,
            vt_r,
            b_inner,
            a_inner,
            scale: cfg.scale,
            residual_init: cfg.residual,
        };
        let base = if cfg.residual {
            w.sub(&adapter.delta())?
        } else {
            w.clone()
        };
        Ok(NoraInit { adapter, base })
    }

    /// Reassembles an adapter from stored factors. Only shapes are checked.
    pub fn from_parts(
        u_r: Matrix,
        vt_r: Matrix,
        b_inner: Matrix,
        a_inner: Matrix,
        scale: f64,
        residual_init: bool,
    ) -> Result<Self> {
        let r_out = u_r.cols();
        let r_in = b_inner.cols();
        if vt_r.rows() != r_out {
            return Err(NoraError::shape("NoraAdapter::from_parts (u_r, vt_r)", u_r.shape(), vt_r.shape()));
        }
        if b_inner.rows() != r_out {
            return Err(NoraError::shape("NoraAdapter::from_parts (b_inner)", (r_out, r_in), b_inner.shape()));
        }
        if a_inner.shape() != (r_in, r_out) {
            return Err(NoraError::shape("NoraAdapter::from_parts (a_inner)", (r_in, r_out), a_inner.shape()));
        }
        if r_in == 0 || r_in > r_out {
            return Err(NoraError::range("inner rank", r_in, 1, r_out));
        }
        let max = u_r.rows().min(vt_r.cols());
        if r_out > max {
            return Err(NoraError::range("outer rank", r_out, 1, max));
        }
        Ok(NoraAdapter {
            u_r,
            vt_r,
            b_inner,
            a_inner,
            scale,
            residual_init,
        })
    }

    pub fn u_r(&self) -> &Matrix {
        &self.u_r
    }

    pub fn vt_r(&self) -> &Matrix {
        &self.vt_r
    }

    pub fn b_inner(&self) -> &Matrix {
        &self.b_inner
    }

    pub fn a_inner(&self) -> &Matrix {
        &self.a_inner
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn r_out(&self) -> usize {
        self.u_r.cols()
    }

    pub fn r_in(&self) -> usize {
        self.b_inner.cols()
    }

    pub fn residual_init(&self) -> bool {
        self.residual_init
    }

    /// `(|U_r^T U_r - I|_F, |Vt_r Vt_r^T - I|_F)`.
    pub fn orthonormality_defect(&self) -> (f64, f64) {
        let eye = Matrix::identity(self.r_out());
        let utu = self.u_r.transpose().matmul(&self.u_r).expect("square");
        let vvt = self.vt_r.matmul(&self.vt_r.transpose()).expect("square");
        (
            utu.sub(&eye).expect("r_out x r_out").frobenius_norm(),
            vvt.sub(&eye).expect("r_out x r_out").frobenius_norm(),
        )
    }

    /// `h = W x + scale U_r (B' (A' (Vt_r x)))`, never forming the `m x n` delta.
    pub fn forward(&self, w: &Matrix, x: &Matrix) -> Result<(Matrix, NoraCache)> {
        check_base(self.dims(), w, "nora forward (w)")?;
        let mut h = w.matmul(x)?;
        let z1 = self.vt_r.matmul(x)?;
        let z2 = self.a_inner.matmul(&z1)?;
        let up = self.u_r.matmul(&self.b_inner.matmul(&z2)?)?;
        h.axpy(self.scale, &up)?;
        Ok((h, NoraCache { x: x.clone(), z1, z2 }))
    }

    /// Gradients for the inner factors and the input. The outer factors get none.
    pub fn backward(&self, w: &Matrix, cache: &NoraCache, dh: &Matrix) -> Result<NoraGrads> {
        check_base(self.dims(), w, "nora backward (w)")?;
        let (m, _) = self.dims();
        let batch = cache.x.cols();
        if cache.z1.shape() != (self.r_out(), batch) || cache.z2.shape() != (self.r_in(), batch) {
            return Err(NoraError::shape(
                "nora backward (stale cache)",
                (self.r_in(), batch),
                cache.z2.shape(),
            ));
        }
        if dh.shape() != (m, batch) {
            return Err(NoraError::shape("nora backward (dh)", (m, batch), dh.shape()));
        }
        // g = scale U_r^T dh reaches the output of B'.
        let g = self.u_r.transpose().matmul(dh)?.scale(self.scale);
        let db_inner = g.matmul(&cache.z2.transpose())?;
        let bt_g = self.b_inner.transpose().matmul(&g)?;
        let da_inner = bt_g.matmul(&cache.z1.transpose())?;
        let mut dx = w.transpose().matmul(dh)?;
        dx.axpy(1.0, &self.vt_r.transpose().matmul(&self.a_inner.transpose().matmul(&bt_g)?)?)?;
        Ok(NoraGrads { db_inner, da_inner, dx })
    }
}

impl Adapter for NoraAdapter {
    type Cache = NoraCache;

    fn dims(&self) -> (usize, usize) {
        (self.u_r.rows(), self.vt_r.cols())
    }

    fn delta(&self) -> Matrix {
        let inner = self.b_inner.matmul(&self.a_inner).expect("validated shapes");
        self.u_r
            .matmul(&inner)
            .and_then(|t| t.matmul(&self.vt_r))
            .expect("validated shapes")
            .scale(self.scale)
    }

    fn forward(&self, w: &Matrix, x: &Matrix) -> Result<(Matrix, NoraCache)> {
        NoraAdapter::forward(self, w, x)
    }

    fn backward(&self, w: &Matrix, cache: &NoraCache, dh: &Matrix) -> Result<Gradients> {
        let g = NoraAdapter::backward(self, w, cache, dh)?;
        Ok(Gradients {
            params: vec![g.db_inner, g.da_inner],
            dx: g.dx,
        })
    }

    fn trainable(&self) -> Vec<&Matrix> {
        vec![&self.b_inner, &self.a_inner]
    }

    fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.b_inner, &mut self.a_inner]
    }

    fn trainable_param_count(&self) -> usize {
        2 * self.r_out() * self.r_in()
    }

    fn frozen_fingerprint(&self) -> u64 {
        fingerprint([&self.u_r, &self.vt_r])
    }
}
