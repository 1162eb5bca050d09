//! Nested low-rank adaptation on dense `f64` matrices.
//!
//! The crate is `no_std` and only needs `alloc`. It carries the numeric
//! substrate (matrix arithmetic and a one-sided Jacobi SVD), the LoRA and
//! nested LoRA (NoRA) adapter layers with analytic gradients, the
//! trainable-parameter budget formulas, and a small deterministic training
//! harness for synthetic low-rank tasks.
//!
//! File formats, history export and the command-line tool live in the
//! `nora-io` companion crate.
#![no_std]

#[cfg(test)]
extern crate std;

extern crate alloc;

pub mod adapters;
pub mod budget;
mod error;
pub mod hash;
pub mod linalg;
mod math;
pub mod rng;
pub mod training;

pub use adapters::{
    Adapter, AnyAdapter, AnyCache, Gradients, InnerSlicing, LoraAdapter, LoraCache, NoraAdapter,
    NoraCache, NoraConfig, NoraInit,
};
pub use budget::{BudgetReport, BudgetRow, BudgetSpec};
pub use error::{NoraError, Result};
pub use linalg::{jacobi_svd, Matrix, SvdFactors};
