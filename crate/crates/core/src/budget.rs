//! Trainable-parameter accounting for LoRA versus NoRA.
//!
//! For `L` adapted layers with `q` square `n x n` matrices each:
//!
//! * LoRA trains `L q r 2n` parameters,
//! * NoRA trains `L q r_out r_in 2`,
//! * the ratio is `r n / (r_out r_in)`, which is `n / r_out` when `r == r_in`.
//!
//! Rectangular `m x n` projections are supported as an extension: LoRA then
//! trains `r (m + n)` per matrix while the NoRA count is unchanged.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{NoraError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BudgetSpec {
    pub layers: u64,
    pub matrices_per_layer: u64,
    /// `n`, the input width (and output width for square matrices).
    pub hidden: u64,
    /// Output width `m` for rectangular matrices; `None` means square.
    pub out_features: Option<u64>,
    pub lora_rank: u64,
    pub outer_rank: u64,
    pub inner_rank: u64,
}

fn invalid(reason: String) -> NoraError {
    NoraError::Invalid {
        what: "budget spec",
        reason,
    }
}

impl BudgetSpec {
    /// Square-matrix spec, validated.
    pub fn new(
        layers: u64,
        matrices_per_layer: u64,
        hidden: u64,
        lora_rank: u64,
        outer_rank: u64,
        inner_rank: u64,
    ) -> Result<Self> {
        let spec = BudgetSpec {
            layers,
            matrices_per_layer,
            hidden,
            out_features: None,
            lora_rank,
            outer_rank,
            inner_rank,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_out_features(mut self, m: u64) -> Result<Self> {
        self.out_features = Some(m);
        self.validate()?;
        Ok(self)
    }

    pub fn out_dim(&self) -> u64 {
        self.out_features.unwrap_or(self.hidden)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("layers", self.layers),
            ("matrices_per_layer", self.matrices_per_layer),
            ("hidden", self.hidden),
            ("out_features", self.out_dim()),
            ("lora_rank", self.lora_rank),
            ("outer_rank", self.outer_rank),
            ("inner_rank", self.inner_rank),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        let max_rank = self.hidden.min(self.out_dim());
        if self.lora_rank > max_rank {
            return Err(invalid(format!("lora_rank {} exceeds {max_rank}", self.lora_rank)));
        }
        if self.outer_rank > max_rank {
            return Err(invalid(format!("outer_rank {} exceeds {max_rank}", self.outer_rank)));
        }
        if self.inner_rank > self.outer_rank {
            return Err(invalid(format!(
                "inner_rank {} exceeds outer_rank {}",
                self.inner_rank, self.outer_rank
            )));
        }
        self.checked_lora()
            .zip(self.checked_nora())
            .map(|_| ())
            .ok_or_else(|| invalid("parameter count overflows u64".into()))
    }

    fn matrices(&self) -> Option<u64> {
        self.layers.checked_mul(self.matrices_per_layer)
    }

    fn checked_lora(&self) -> Option<u64> {
        let width = self.hidden.checked_add(self.out_dim())?;
        self.matrices()?.checked_mul(self.lora_rank)?.checked_mul(width)
    }

    fn checked_nora(&self) -> Option<u64> {
        self.matrices()?
            .checked_mul(self.outer_rank)?
            .checked_mul(self.inner_rank)?
            .checked_mul(2)
    }

    /// `L q r 2n` (or `L q r (m + n)` for rectangular matrices).
    pub fn lora_params(&self) -> u64 {
        self.checked_lora().expect("validated spec")
    }

    /// `L q r_out r_in 2`.
    pub fn nora_params(&self) -> u64 {
        self.checked_nora().expect("validated spec")
    }

    /// `lora_params / nora_params` as a reduced fraction.
    pub fn ratio_fraction(&self) -> (u64, u64) {
        let (num, den) = (self.lora_params(), self.nora_params());
        let g = gcd(num, den);
        (num / g, den / g)
    }

    /// `r n / (r_out r_in)` for square matrices.
    pub fn efficiency_ratio(&self) -> f64 {
        let (num, den) = self.ratio_fraction();
        num as f64 / den as f64
    }

    /// The `n / r_out` approximation, exact when `r == r_in`.
    pub fn approx_ratio(&self) -> f64 {
        self.hidden as f64 / self.outer_rank as f64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Human-readable count in the `8.4M` style: one decimal, rounded half up.
pub fn format_params(count: u64) -> String {
    let (unit, suffix) = if count >= 1_000_000 {
        (1_000_000u128, "M")
    } else if count >= 1_000 {
        (1_000u128, "K")
    } else {
        return format!("{count}");
    };
    let tenths = (u128::from(count) * 10 + unit / 2) / unit;
    format!("{}.{}{}", tenths / 10, tenths % 10, suffix)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetRow {
    pub name: String,
    pub spec: BudgetSpec,
    pub lora_params: u64,
    pub nora_params: u64,
    pub ratio: f64,
    pub approx_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetReport {
    pub rows: Vec<BudgetRow>,
}

pub const ASSUMPTIONS: &[&str] = &[
    "every adapted matrix is n x n unless out_features is given",
    "q matrices are adapted in each of the L layers",
    "counts include trainable parameters only; frozen U_r, V_r^T and W are excluded",
    "LoRA per matrix: r (m + n); NoRA per matrix: 2 r_out r_in",
];

pub fn budget_report<S: AsRef<str>>(specs: &[(S, BudgetSpec)]) -> Result<BudgetReport> {
    if specs.is_empty() {
        return Err(NoraError::Usage("budget report needs at least one spec".into()));
    }
    let mut rows = Vec::with_capacity(specs.len());
    for (name, spec) in specs {
        spec.validate()?;
        rows.push(BudgetRow {
            name: name.as_ref().into(),
            spec: *spec,
            lora_params: spec.lora_params(),
            nora_params: spec.nora_params(),
            ratio: spec.efficiency_ratio(),
            approx_ratio: spec.approx_ratio(),
        });
    }
    Ok(BudgetReport { rows })
}

const HEADER: [&str; 11] = [
    "name", "L", "q", "n", "r", "r_out", "r_in", "lora_params", "nora_params", "ratio", "n/r_out",
];

impl BudgetRow {
    fn cells(&self) -> [String; 11] {
        let s = &self.spec;
        let n = match s.out_features {
            Some(m) if m != s.hidden => format!("{m}x{}", s.hidden),
            _ => format!("{}", s.hidden),
        };
        [
            self.name.clone(),
            format!("{}", s.layers),
            format!("{}", s.matrices_per_layer),
            n,
            format!("{}", s.lora_rank),
            format!("{}", s.outer_rank),
            format!("{}", s.inner_rank),
            format!("{} ({})", self.lora_params, format_params(self.lora_params)),
            format!("{} ({})", self.nora_params, format_params(self.nora_params)),
            format!("{:.4}", self.ratio),
            format!("{:.4}", self.approx_ratio),
        ]
    }
}

impl BudgetReport {
    /// Aligned table followed by the assumption list.
    pub fn render_text(&self) -> String {
        let mut table: Vec<[String; 11]> = Vec::with_capacity(self.rows.len() + 1);
        table.push(HEADER.map(String::from));
        table.extend(self.rows.iter().map(BudgetRow::cells));
        let mut widths = [0usize; 11];
        for row in &table {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        for row in &table {
            let mut line = String::new();
            for (i, (cell, w)) in row.iter().zip(widths).enumerate() {
                if i > 0 {
                    line.push_str("  ");
                }
                if i == 0 {
                    let _ = write!(line, "{cell:<w$}");
                } else {
                    let _ = write!(line, "{cell:>w$}");
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out.push_str("assumptions:\n");
        for a in ASSUMPTIONS {
            let _ = writeln!(out, "  - {a}");
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("name,layers,per_layer,out_features,hidden,lora_rank,r_out,r_in,lora_params,nora_params,ratio,approx_ratio\n");
        for r in &self.rows {
            let s = &r.spec;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{:?},{:?}",
                r.name,
                s.layers,
                s.matrices_per_layer,
                s.out_dim(),
                s.hidden,
                s.lora_rank,
                s.outer_rank,
                s.inner_rank,
                r.lora_params,
                r.nora_params,
                r.ratio,
                r.approx_ratio
            );
        }
        out
    }
}
