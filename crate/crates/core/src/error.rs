use alloc::string::String;

pub type Result<T, E = NoraError> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NoraError {
    #[error("shape mismatch in {op}: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    Shape {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("{what} = {value} out of range [{min}, {max}]")]
    Range {
        what: &'static str,
        value: u64,
        min: u64,
        max: u64,
    },

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("jacobi svd did not converge after {sweeps} sweeps (off-diagonal norm {off_diagonal:e})")]
    Convergence { sweeps: usize, off_diagonal: f64 },

    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("frozen factors changed during training")]
    FreezeViolation,

    #[error("usage: {0}")]
    Usage(String),
}

impl NoraError {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        NoraError::Shape {
            op,
            left_rows: left.0,
            left_cols: left.1,
            right_rows: right.0,
            right_cols: right.1,
        }
    }

    pub(crate) fn range(what: &'static str, value: usize, min: usize, max: usize) -> Self {
        NoraError::Range {
            what,
            value: value as u64,
            min: min as u64,
            max: max as u64,
        }
    }
}
