//! LoRA and nested LoRA (NoRA) adapters around a frozen base weight `W`.
//!
//! Both adapters add a low-rank `delta` to `W`: `h = W x + delta x`. Only the
//! fields returned by [`Adapter::trainable`] ever change during training.

mod lora;
mod nora;

use alloc::vec::Vec;

pub use lora::{LoraAdapter, LoraCache, LoraGrads};
pub use nora::{InnerSlicing, NoraAdapter, NoraCache, NoraConfig, NoraGrads, NoraInit};

use crate::error::{NoraError, Result};
use crate::hash::Fnv1a;
use crate::linalg::Matrix;

/// Trainable-parameter gradients in [`Adapter::trainable`] order plus the
/// gradient with respect to the layer input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<Matrix>,
    pub dx: Matrix,
}

pub trait Adapter {
    type Cache;

    /// `(m, n)` of the adapted weight.
    fn dims(&self) -> (usize, usize);

    /// The materialized `m x n` weight update.
    fn delta(&self) -> Matrix;

    fn forward(&self, w: &Matrix, x: &Matrix) -> Result<(Matrix, Self::Cache)>;

    fn backward(&self, w: &Matrix, cache: &Self::Cache, dh: &Matrix) -> Result<Gradients>;

    fn trainable(&self) -> Vec<&Matrix>;

    fn trainable_mut(&mut self) -> Vec<&mut Matrix>;

    fn trainable_param_count(&self) -> usize;

    /// FNV-1a over the bytes of every frozen factor (empty input for LoRA).
    fn frozen_fingerprint(&self) -> u64;

    /// `w + delta`.
    fn merge(&self, w: &Matrix) -> Result<Matrix> {
        check_base(self.dims(), w, "merge")?;
        w.add(&self.delta())
    }
}

pub(crate) fn check_base(dims: (usize, usize), w: &Matrix, op: &'static str) -> Result<()> {
    if w.shape() != dims {
        return Err(NoraError::shape(op, dims, w.shape()));
    }
    Ok(())
}

pub(crate) fn fingerprint<'a>(frozen: impl IntoIterator<Item = &'a Matrix>) -> u64 {
    let mut h = Fnv1a::new();
    for m in frozen {
        h.update(&(m.rows() as u64).to_le_bytes());
        h.update(&(m.cols() as u64).to_le_bytes());
        h.update_f64s(m.as_slice());
    }
    h.finish()
}

/// Either adapter kind, for code that handles both (file IO, the CLI).
#[derive(Debug, Clone, PartialEq)]
pub enum AnyAdapter {
    Lora(LoraAdapter),
    Nora(NoraAdapter),
}

impl AnyAdapter {
    pub fn kind_name(&self) -> &'static str {
        match self {
            AnyAdapter::Lora(_) => "lora",
            AnyAdapter::Nora(_) => "nora",
        }
    }

    pub fn scale(&self) -> f64 {
        match self {
            AnyAdapter::Lora(a) => a.scale(),
            AnyAdapter::Nora(a) => a.scale(),
        }
    }
}

/// Forward cache of an [`AnyAdapter`].
#[derive(Debug, Clone)]
pub enum AnyCache {
    Lora(LoraCache),
    Nora(NoraCache),
}

impl Adapter for AnyAdapter {
    type Cache = AnyCache;

    fn dims(&self) -> (usize, usize) {
        match self {
            AnyAdapter::Lora(a) => a.dims(),
            AnyAdapter::Nora(a) => a.dims(),
        }
    }

    fn delta(&self) -> Matrix {
        match self {
            AnyAdapter::Lora(a) => a.delta(),
            AnyAdapter::Nora(a) => a.delta(),
        }
    }

    fn forward(&self, w: &Matrix, x: &Matrix) -> Result<(Matrix, AnyCache)> {
        match self {
            AnyAdapter::Lora(a) => a.forward(w, x).map(|(h, c)| (h, AnyCache::Lora(c))),
            AnyAdapter::Nora(a) => a.forward(w, x).map(|(h, c)| (h, AnyCache::Nora(c))),
        }
    }

    fn backward(&self, w: &Matrix, cache: &AnyCache, dh: &Matrix) -> Result<Gradients> {
        match (self, cache) {
            (AnyAdapter::Lora(a), AnyCache::Lora(c)) => Adapter::backward(a, w, c, dh),
            (AnyAdapter::Nora(a), AnyCache::Nora(c)) => Adapter::backward(a, w, c, dh),
            _ => Err(NoraError::Invalid {
                what: "forward cache",
                reason: "cache was produced by a different adapter kind".into(),
            }),
        }
    }

    fn trainable(&self) -> Vec<&Matrix> {
        match self {
            AnyAdapter::Lora(a) => a.trainable(),
            AnyAdapter::Nora(a) => a.trainable(),
        }
    }

    fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            AnyAdapter::Lora(a) => a.trainable_mut(),
            AnyAdapter::Nora(a) => a.trainable_mut(),
        }
    }

    fn trainable_param_count(&self) -> usize {
        match self {
            AnyAdapter::Lora(a) => a.trainable_param_count(),
            AnyAdapter::Nora(a) => a.trainable_param_count(),
        }
    }

    fn frozen_fingerprint(&self) -> u64 {
        match self {
            AnyAdapter::Lora(a) => a.frozen_fingerprint(),
            AnyAdapter::Nora(a) => a.frozen_fingerprint(),
        }
    }
}

impl From<LoraAdapter> for AnyAdapter {
    fn from(a: LoraAdapter) -> Self {
        AnyAdapter::Lora(a)
    }
}

impl From<NoraAdapter> for AnyAdapter {
    fn from(a: NoraAdapter) -> Self {
        AnyAdapter::Nora(a)
    }
}
