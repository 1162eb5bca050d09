//! `step,loss` CSV for training histories.
//!
//! Losses are written with 17 significant digits, enough to parse back to the
//! identical `f64`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::format::write_atomic;

pub fn render_history(losses: &[f64]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "loss"])?;
    for (i, loss) in losses.iter().enumerate() {
        w.write_record([(i + 1).to_string(), format!("{loss:.16e}")])?;
    }
    w.into_inner().map_err(|e| Error::Usage(format!("csv buffer: {e}")))
}

pub fn export_history(losses: &[f64], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &render_history(losses)?)
}

/// Parses a history CSV back into its losses, checking that steps run 1..=N.
pub fn read_history(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["step", "loss"] {
        return Err(Error::Format(format!("{}: expected header step,loss", path.display())));
    }
    let mut losses = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let step: usize = rec[0]
            .parse()
            .map_err(|e| Error::Format(format!("step {:?}: {e}", &rec[0])))?;
        if step != i + 1 {
            return Err(Error::Format(format!("expected step {}, found {step}", i + 1)));
        }
        let loss: f64 = rec[1]
            .parse()
            .map_err(|e| Error::Format(format!("loss {:?}: {e}", &rec[1])))?;
        losses.push(loss);
    }
    Ok(losses)
}
