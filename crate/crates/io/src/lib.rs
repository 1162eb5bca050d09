//! File formats and the command-line surface for `nora-core` adapters.
//!
//! * [`format`]: the `NORA1` little-endian adapter/matrix container with an
//!   FNV-1a trailer.
//! * [`history`]: `step,loss` CSV export of training runs.
//! * [`manifest`]: the JSON run manifest written next to trained adapters.
//! * [`cli`]: the `nora` tool (`init`, `train`, `gradcheck`, `budget`, `merge`, `inspect`).

pub mod cli;
mod error;
pub mod format;
pub mod history;
pub mod manifest;
pub mod source;

pub use error::{Error, Result};
