//! JSON manifest written next to every trained adapter.

use std::collections::BTreeMap;
use std::path::Path;

use nora_core::hash::fnv1a;
use nora_core::training::{TaskSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::format::write_atomic;

pub const TOOL_VERSION: &str = concat!("nora ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub optimizer: String,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub loss: String,
}

impl From<&TrainConfig> for ConfigEcho {
    fn from(c: &TrainConfig) -> Self {
        ConfigEcho {
            steps: c.steps,
            batch: c.batch,
            lr: c.lr,
            optimizer: c.optimizer.name().into(),
            adam_beta1: c.adam_beta1,
            adam_beta2: c.adam_beta2,
            adam_eps: c.adam_eps,
            seed: c.seed,
            loss: c.loss.name().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEcho {
    pub kind: String,
    pub m: usize,
    pub n: usize,
    pub rank_gap: usize,
    pub seed: u64,
    pub samples: usize,
    pub noise_std: f64,
}

impl From<&TaskSpec> for TaskEcho {
    fn from(t: &TaskSpec) -> Self {
        TaskEcho {
            kind: "lowrank".into(),
            m: t.m,
            n: t.n,
            rank_gap: t.rank_gap,
            seed: t.seed,
            samples: t.samples,
            noise_std: t.noise_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: ConfigEcho,
    pub seeds: BTreeMap<String, u64>,
    pub task: TaskEcho,
    /// FNV-1a (hex) of each input and output artifact, keyed by role.
    pub artifacts: BTreeMap<String, String>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub wall_time_secs: f64,
}

pub fn artifact_hash(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a(bytes))
}

pub fn write_manifest(manifest: &RunManifest, path: impl AsRef<Path>) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(manifest)?;
    json.push(b'\n');
    write_atomic(path.as_ref(), &json)
}
