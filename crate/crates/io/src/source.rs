//! Parsing of `--weight` and `--task` arguments.

use std::path::Path;

use nora_core::rng::synthetic_weight;
use nora_core::training::TaskSpec;
use nora_core::Matrix;

use crate::error::{Error, Result};
use crate::format::load_matrix;

/// `gen:MxN:seed` or a path to a plain-matrix file.
pub fn load_weight(spec: &str) -> Result<Matrix> {
    match spec.strip_prefix("gen:") {
        Some(rest) => {
            let (m, n, seed) = parse_gen(rest)
                .ok_or_else(|| Error::Usage(format!("bad weight spec {spec:?}, expected gen:MxN:seed")))?;
            Ok(synthetic_weight(m, n, seed))
        }
        None => load_matrix(Path::new(spec)),
    }
}

fn parse_gen(rest: &str) -> Option<(usize, usize, u64)> {
    let (dims, seed) = rest.split_once(':')?;
    let (m, n) = dims.split_once('x')?;
    let (m, n) = (m.parse().ok()?, n.parse().ok()?);
    if m == 0 || n == 0 {
        return None;
    }
    Some((m, n, seed.parse().ok()?))
}

/// `lowrank:M:N:GAP:SEED`.
pub fn parse_task(spec: &str) -> Result<TaskSpec> {
    let bad = || Error::Usage(format!("bad task spec {spec:?}, expected lowrank:M:N:GAP:SEED"));
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["lowrank", m, n, gap, seed] => Ok(TaskSpec::new(
            m.parse().map_err(|_| bad())?,
            n.parse().map_err(|_| bad())?,
            gap.parse().map_err(|_| bad())?,
            seed.parse().map_err(|_| bad())?,
        )),
        _ => Err(bad()),
    }
}
