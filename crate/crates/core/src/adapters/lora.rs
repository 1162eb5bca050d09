use alloc::vec;
use alloc::vec::Vec;

use crate::adapters::{check_base, fingerprint, Adapter, Gradients};
use crate::error::{NoraError, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::rng::{gaussian_matrix, seeded};

/// Plain LoRA: `delta = scale * B A` with `A: r x n`, `B: m x r`, both trainable.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    a: Matrix,
    b: Matrix,
    scale: f64,
}

#[derive(Debug, Clone)]
pub struct LoraCache {
    pub x: Matrix,
    /// `A x`, shape `r x batch`.
    pub z: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoraGrads {
    pub da: Matrix,
    pub db: Matrix,
    pub dx: Matrix,
}

impl LoraAdapter {
    /// Standard initialization: `A ~ N(0, 1/r)` from the seeded generator, `B = 0`.
    pub fn init(m: usize, n: usize, r: usize, seed: u64, scale: f64) -> Result<Self> {
        let max = m.min(n);
        if r == 0 || r > max {
            return Err(NoraError::range("lora rank", r, 1, max));
        }
        if r == max {
            log::warn!("lora rank {r} equals min(m, n); the update is not low-rank");
        }
        let mut rng = seeded(seed);
        let a = gaussian_matrix(&mut rng, r, n, 1.0 / math::sqrt(r as f64));
        Ok(LoraAdapter {
            a,
            b: Matrix::zeros(m, r),
            scale,
        })
    }

    pub fn from_parts(a: Matrix, b: Matrix, scale: f64) -> Result<Self> {
        if b.cols() != a.rows() {
            return Err(NoraError::shape("LoraAdapter::from_parts", b.shape(), a.shape()));
        }
        if a.rows() == 0 {
            return Err(NoraError::range("lora rank", 0, 1, a.cols().min(b.rows())));
        }
        Ok(LoraAdapter { a, b, scale })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rank(&self) -> usize {
        self.a.rows()
    }

    pub fn forward(&self, w: &Matrix, x: &Matrix) -> Result<(Matrix, LoraCache)> {
        check_base(self.dims(), w, "lora forward (w)")?;
        let base = w.matmul(x)?;
        let z = self.a.matmul(x)?;
        let mut h = base;
        h.axpy(self.scale, &self.b.matmul(&z)?)?;
        Ok((h, LoraCache { x: x.clone(), z }))
    }

    pub fn backward(&self, w: &Matrix, cache: &LoraCache, dh: &Matrix) -> Result<LoraGrads> {
        check_base(self.dims(), w, "lora backward (w)")?;
        let (m, _) = self.dims();
        let batch = cache.x.cols();
        if dh.shape() != (m, batch) || cache.z.shape() != (self.rank(), batch) {
            return Err(NoraError::shape("lora backward (dh)", (m, batch), dh.shape()));
        }
        // g = scale * B^T dh, the gradient reaching z = A x.
        let g = self.b.transpose().matmul(dh)?.scale(self.scale);
        let db = dh.matmul(&cache.z.transpose())?.scale(self.scale);
        let da = g.matmul(&cache.x.transpose())?;
        let mut dx = w.transpose().matmul(dh)?;
        dx.axpy(1.0, &self.a.transpose().matmul(&g)?)?;
        Ok(LoraGrads { da, db, dx })
    }
}

impl Adapter for LoraAdapter {
    type Cache = LoraCache;

    fn dims(&self) -> (usize, usize) {
        (self.b.rows(), self.a.cols())
    }

    fn delta(&self) -> Matrix {
        self.b
            .matmul(&self.a)
            .expect("shapes validated at construction")
            .scale(self.scale)
    }

    fn forward(&self, w: &Matrix, x: &Matrix) -> Result<(Matrix, LoraCache)> {
        LoraAdapter::forward(self, w, x)
    }

    fn backward(&self, w: &Matrix, cache: &LoraCache, dh: &Matrix) -> Result<Gradients> {
        let g = LoraAdapter::backward(self, w, cache, dh)?;
        Ok(Gradients {
            params: vec![g.da, g.db],
            dx: g.dx,
        })
    }

    fn trainable(&self) -> Vec<&Matrix> {
        vec![&self.a, &self.b]
    }

    fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.a, &mut self.b]
    }

    fn trainable_param_count(&self) -> usize {
        let (m, n) = self.dims();
        self.rank() * (m + n)
    }

    fn frozen_fingerprint(&self) -> u64 {
        fingerprint([])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::gaussian_matrix;

    #[test]
    fn zero_init_delta() {
        let ad = LoraAdapter::init(4, 4, 2, 7, 1.0).unwrap();
        assert_eq!(ad.delta(), Matrix::zeros(4, 4));
        assert!(ad.b().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = LoraAdapter::init(6, 5, 3, 99, 1.0).unwrap();
        let b = LoraAdapter::init(6, 5, 3, 99, 1.0).unwrap();
        assert!(a.a().bit_eq(b.a()) && a.b().bit_eq(b.b()));
        let c = LoraAdapter::init(6, 5, 3, 100, 1.0).unwrap();
        assert!(!a.a().bit_eq(c.a()));
    }

    #[test]
    fn forward_at_init_is_base() {
        let mut rng = seeded(3);
        let w = gaussian_matrix(&mut rng, 4, 4, 1.0);
        let x = gaussian_matrix(&mut rng, 4, 3, 1.0);
        let ad = LoraAdapter::init(4, 4, 2, 1, 1.0).unwrap();
        let (h, _) = ad.forward(&w, &x).unwrap();
        assert!(h.bit_eq(&w.matmul(&x).unwrap()));
    }

    #[test]
    fn zero_init_gradients() {
        let mut rng = seeded(4);
        let w = gaussian_matrix(&mut rng, 5, 4, 1.0);
        let x = gaussian_matrix(&mut rng, 4, 3, 1.0);
        let dh = gaussian_matrix(&mut rng, 5, 3, 1.0);
        let ad = LoraAdapter::init(5, 4, 2, 1, 1.0).unwrap();
        let (_, cache) = ad.forward(&w, &x).unwrap();
        let g = ad.backward(&w, &cache, &dh).unwrap();
        let expect_db = dh.matmul(&ad.a().matmul(&x).unwrap().transpose()).unwrap();
        assert!(g.db.sub(&expect_db).unwrap().max_abs() < 1e-14);
        assert_eq!(g.da, Matrix::zeros(2, 4));
    }

    #[test]
    fn zero_upstream_gradient() {
        let mut rng = seeded(5);
        let w = gaussian_matrix(&mut rng, 5, 4, 1.0);
        let x = gaussian_matrix(&mut rng, 4, 3, 1.0);
        let mut ad = LoraAdapter::init(5, 4, 2, 1, 1.0).unwrap();
        *ad.trainable_mut()[1] = gaussian_matrix(&mut rng, 5, 2, 1.0);
        let (_, cache) = ad.forward(&w, &x).unwrap();
        let g = ad.backward(&w, &cache, &Matrix::zeros(5, 3)).unwrap();
        assert_eq!(g.da, Matrix::zeros(2, 4));
        assert_eq!(g.db, Matrix::zeros(5, 2));
        assert_eq!(g.dx, Matrix::zeros(4, 3));
    }

    #[test]
    fn rank_range() {
        assert!(matches!(LoraAdapter::init(4, 3, 0, 0, 1.0), Err(NoraError::Range { .. })));
        assert!(matches!(LoraAdapter::init(4, 3, 4, 0, 1.0), Err(NoraError::Range { .. })));
        assert!(LoraAdapter::init(4, 3, 3, 0, 1.0).is_ok());
    }

    #[test]
    fn param_count() {
        let ad = LoraAdapter::init(64, 64, 8, 0, 1.0).unwrap();
        assert_eq!(ad.trainable_param_count(), 1024);
    }

    #[test]
    fn shape_errors() {
        let ad = LoraAdapter::init(4, 3, 2, 0, 1.0).unwrap();
        let w = Matrix::zeros(4, 3);
        assert!(ad.forward(&w, &Matrix::zeros(4, 2)).is_err());
        assert!(ad.forward(&Matrix::zeros(3, 3), &Matrix::zeros(3, 2)).is_err());
        let (_, cache) = ad.forward(&w, &Matrix::zeros(3, 2)).unwrap();
        assert!(ad.backward(&w, &cache, &Matrix::zeros(4, 5)).is_err());
        assert!(ad.merge(&Matrix::zeros(3, 4)).is_err());
    }
}
