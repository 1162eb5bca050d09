//! The `nora` command-line tool.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error. Every failure prints
//! exactly one line starting with `error:` on stderr.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nora_core::budget::{budget_report, BudgetSpec};
use nora_core::rng::{gaussian_matrix, seeded, synthetic_weight};
use nora_core::training::{check_adapter_gradients, train_adapter, LossKind, OptimizerKind, TrainConfig};
use nora_core::{jacobi_svd, Adapter, AnyAdapter, InnerSlicing, LoraAdapter, NoraAdapter, NoraConfig};
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::format::{encode_adapter, load_adapter, save_matrix, write_atomic};
use crate::history::render_history;
use crate::manifest::{artifact_hash, write_manifest, RunManifest, TOOL_VERSION};
use crate::source::{load_weight, parse_task};

/// Gradient-check pass threshold on the max relative error.
pub const GRADCHECK_TOL: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(name = "nora", version, about = "Nested low-rank adapters: init, train, check, merge, inspect")]
pub struct Cli {
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Initialize an adapter from a weight matrix.
    Init(InitArgs),
    /// Train an adapter on a synthetic low-rank task.
    Train(TrainArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Trainable-parameter budget table.
    Budget(BudgetArgs),
    /// Fold an adapter into its base weight.
    Merge(MergeArgs),
    /// Describe an adapter file.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct InitArgs {
    /// Weight file or `gen:MxN:seed`.
    #[arg(long)]
    pub weight: String,
    #[arg(long, required_unless_present = "lora_rank")]
    pub r_out: Option<usize>,
    #[arg(long, required_unless_present = "lora_rank")]
    pub r_in: Option<usize>,
    /// Replace the base weight with `W - delta_init`; requires --base-out.
    #[arg(long, requires = "base_out")]
    pub residual: bool,
    /// Where to write the residual base weight.
    #[arg(long)]
    pub base_out: Option<PathBuf>,
    /// Slice inner factors with width r_out / r_in, as in the reference listing.
    #[arg(long)]
    pub reference_slicing: bool,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Build a plain LoRA adapter of this rank instead of NoRA.
    #[arg(long, conflicts_with_all = ["r_out", "r_in", "residual", "reference_slicing"])]
    pub lora_rank: Option<usize>,
    /// Seed for the LoRA `A` initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Opt {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Loss {
    Mse,
    CrossEntropy,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub adapter: PathBuf,
    /// `lowrank:M:N:GAP:SEED`.
    #[arg(long)]
    pub task: String,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = Opt::Adam)]
    pub opt: Opt,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    /// Minibatch sampling seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, value_enum, default_value_t = Loss::Mse)]
    pub loss: Loss,
    /// Base weight file; defaults to the task's base weight.
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub history: PathBuf,
    /// Defaults to `<output>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub adapter: PathBuf,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Seed for the probe weight, inputs and targets.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    #[arg(long)]
    pub layers: u64,
    #[arg(long)]
    pub per_layer: u64,
    #[arg(long)]
    pub hidden: u64,
    /// Output width for rectangular matrices.
    #[arg(long)]
    pub out_features: Option<u64>,
    #[arg(long)]
    pub lora_rank: u64,
    #[arg(long)]
    pub r_out: u64,
    #[arg(long)]
    pub r_in: u64,
    #[arg(long, default_value = "spec")]
    pub name: String,
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    #[arg(long)]
    pub adapter: PathBuf,
    /// Weight file or `gen:MxN:seed`.
    #[arg(long)]
    pub weight: String,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub adapter: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let text = e.to_string();
            let detail: Vec<&str> = text
                .lines()
                .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            let detail = detail.join(" ");
            let detail = detail.trim_start_matches("error: ");
            let _ = writeln!(err, "error: {detail}");
            return 2;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(err, "error: {msg}");
            match e {
                Error::Usage(_) => 2,
                _ => 1,
            }
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Init(a) => init(a, cli.json, out),
        Command::Train(a) => train(a, cli.json, out),
        Command::Gradcheck(a) => gradcheck(a, cli.json, out),
        Command::Budget(a) => budget(a, cli.json, out),
        Command::Merge(a) => merge(a, cli.json, out),
        Command::Inspect(a) => inspect(a, cli.json, out),
    }
}

fn emit(out: &mut dyn Write, json: bool, value: &impl Serialize, text: &str) -> Result<()> {
    let res = if json {
        serde_json::to_writer_pretty(&mut *out, value)
            .map_err(Error::from)
            .and_then(|_| writeln!(out).map_err(|e| Error::io("<stdout>", e)))
    } else {
        out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
    };
    res
}

fn init(a: &InitArgs, json: bool, out: &mut dyn Write) -> Result<i32> {
    let w = load_weight(&a.weight)?;
    let (m, n) = w.shape();
    let adapter: AnyAdapter = match a.lora_rank {
        Some(r) => LoraAdapter::init(m, n, r, a.seed, a.scale)?.into(),
        None => {
            let cfg = NoraConfig {
                scale: a.scale,
                residual: a.residual,
                slicing: if a.reference_slicing {
                    InnerSlicing::ReferenceListing
                } else {
                    InnerSlicing::LeadingRank
                },
            };
            let (r_out, r_in) = (a.r_out.expect("clap enforces"), a.r_in.expect("clap enforces"));
            let init = NoraAdapter::init(&w, r_out, r_in, &cfg)?;
            if let Some(path) = &a.base_out {
                save_matrix(&init.base, path)?;
            }
            init.adapter.into()
        }
    };
    let bytes = encode_adapter(&adapter)?;
    write_atomic(&a.output, &bytes)?;
    let summary = json!({
        "kind": adapter.kind_name(),
        "m": m,
        "n": n,
        "trainable_params": adapter.trainable_param_count(),
        "output": a.output.display().to_string(),
        "hash": artifact_hash(&bytes),
    });
    let text = format!(
        "wrote {} adapter {}x{} ({} trainable params) to {}\nhash: {}\n",
        adapter.kind_name(),
        m,
        n,
        adapter.trainable_param_count(),
        a.output.display(),
        artifact_hash(&bytes)
    );
    emit(out, json, &summary, &text)?;
    Ok(0)
}

fn manifest_path(a: &TrainArgs) -> PathBuf {
    a.manifest.clone().unwrap_or_else(|| {
        let mut s = a.output.clone().into_os_string();
        s.push(".manifest.json");
        PathBuf::from(s)
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn train(a: &TrainArgs, json: bool, out: &mut dyn Write) -> Result<i32> {
    let input_bytes = read_bytes(&a.adapter)?;
    let mut adapter = crate::format::decode_adapter(&input_bytes)?;
    let mut spec = parse_task(&a.task)?;
    spec.samples = a.samples;
    spec.noise_std = a.noise;
    let task = spec.generate()?;

    let residual = matches!(&adapter, AnyAdapter::Nora(n) if n.residual_init());
    let base = match &a.base {
        Some(path) => crate::format::load_matrix(path)?,
        None if residual => {
            return Err(Error::Usage(
                "adapter was initialized in residual mode; pass its residual weight with --base".into(),
            ))
        }
        None => task.w_base.clone(),
    };
    if adapter.dims() != (spec.m, spec.n) {
        return Err(Error::Usage(format!(
            "adapter is {}x{} but task is {}x{}",
            adapter.dims().0,
            adapter.dims().1,
            spec.m,
            spec.n
        )));
    }

    let cfg = TrainConfig {
        steps: a.steps,
        batch: a.batch,
        lr: a.lr,
        optimizer: match a.opt {
            Opt::Sgd => OptimizerKind::Sgd,
            Opt::Adam => OptimizerKind::Adam,
        },
        seed: a.seed,
        loss: match a.loss {
            Loss::Mse => LossKind::Mse,
            Loss::CrossEntropy => LossKind::CrossEntropy,
        },
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let mut history = train_adapter(&mut adapter, &base, &task, &cfg)?;
    history.wall_time_secs = start.elapsed().as_secs_f64();

    let out_bytes = encode_adapter(&adapter)?;
    write_atomic(&a.output, &out_bytes)?;
    let csv = render_history(&history.losses)?;
    write_atomic(&a.history, &csv)?;

    let mut artifacts = BTreeMap::new();
    artifacts.insert("adapter_in".to_owned(), artifact_hash(&input_bytes));
    artifacts.insert("adapter_out".to_owned(), artifact_hash(&out_bytes));
    artifacts.insert("history".to_owned(), artifact_hash(&csv));
    if let Some(path) = &a.base {
        artifacts.insert("base".to_owned(), artifact_hash(&read_bytes(path)?));
    }
    let manifest = RunManifest {
        tool_version: TOOL_VERSION.into(),
        config: (&cfg).into(),
        seeds: BTreeMap::from([("minibatch".to_owned(), cfg.seed), ("task".to_owned(), spec.seed)]),
        task: (&spec).into(),
        artifacts: artifacts.clone(),
        initial_loss: history.initial_loss,
        final_loss: history.final_loss(),
        wall_time_secs: history.wall_time_secs,
    };
    write_manifest(&manifest, manifest_path(a))?;

    let summary = json!({
        "steps": cfg.steps,
        "initial_loss": history.initial_loss,
        "final_loss": history.final_loss(),
        "frozen_fingerprint": format!("{:016x}", history.frozen_fingerprint),
        "artifacts": artifacts,
    });
    let text = format!(
        "steps: {}\ninitial_loss: {:.16e}\nfinal_loss: {:.16e}\nfrozen_fingerprint: {:016x}\nadapter_out: {}\n",
        cfg.steps,
        history.initial_loss,
        history.final_loss(),
        history.frozen_fingerprint,
        artifacts["adapter_out"]
    );
    emit(out, json, &summary, &text)?;
    Ok(0)
}

fn gradcheck(a: &GradcheckArgs, json: bool, out: &mut dyn Write) -> Result<i32> {
    if a.eps.is_nan() || a.eps <= 0.0 {
        return Err(Error::Usage(format!("--eps must be > 0, got {}", a.eps)));
    }
    if a.batch == 0 {
        return Err(Error::Usage("--batch must be positive".into()));
    }
    let adapter = load_adapter(&a.adapter)?;
    let (m, n) = adapter.dims();
    let w = synthetic_weight(m, n, a.seed);
    let mut rng = seeded(a.seed ^ 0x6772_6164);
    let x = gaussian_matrix(&mut rng, n, a.batch, 1.0);
    let target = gaussian_matrix(&mut rng, m, a.batch, 1.0);
    let report = match &adapter {
        AnyAdapter::Lora(l) => check_adapter_gradients(l, &w, &x, &target, a.eps)?,
        AnyAdapter::Nora(l) => check_adapter_gradients(l, &w, &x, &target, a.eps)?,
    };
    let pass = report.worst() < GRADCHECK_TOL;
    let summary = json!({
        "kind": adapter.kind_name(),
        "checked": report.checked,
        "max_rel_error": report.max_rel_error,
        "max_rel_error_input": report.max_rel_error_input,
        "eps": a.eps,
        "pass": pass,
    });
    let text = format!(
        "kind: {}\nchecked: {}\nmax_rel_error: {:.6e}\nmax_rel_error_input: {:.6e}\nresult: {}\n",
        adapter.kind_name(),
        report.checked,
        report.max_rel_error,
        report.max_rel_error_input,
        if pass { "pass" } else { "fail" }
    );
    emit(out, json, &summary, &text)?;
    if pass {
        Ok(0)
    } else {
        Err(Error::Domain(nora_core::NoraError::Invalid {
            what: "gradients",
            reason: format!("max relative error {:e} >= {GRADCHECK_TOL:e}", report.worst()),
        }))
    }
}

fn budget(a: &BudgetArgs, json: bool, out: &mut dyn Write) -> Result<i32> {
    let mut spec = BudgetSpec::new(a.layers, a.per_layer, a.hidden, a.lora_rank, a.r_out, a.r_in)?;
    if let Some(m) = a.out_features {
        spec = spec.with_out_features(m)?;
    }
    let report = budget_report(&[(a.name.as_str(), spec)])?;
    let rows: Vec<_> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "name": r.name,
                "layers": r.spec.layers,
                "per_layer": r.spec.matrices_per_layer,
                "out_features": r.spec.out_dim(),
                "hidden": r.spec.hidden,
                "lora_rank": r.spec.lora_rank,
                "r_out": r.spec.outer_rank,
                "r_in": r.spec.inner_rank,
                "lora_params": r.lora_params,
                "nora_params": r.nora_params,
                "ratio": r.ratio,
                "approx_ratio": r.approx_ratio,
            })
        })
        .collect();
    let value = json!({ "rows": rows, "assumptions": nora_core::budget::ASSUMPTIONS });
    let text = if a.csv {
        report.render_csv()
    } else {
        report.render_text()
    };
    emit(out, json, &value, &text)?;
    Ok(0)
}

fn merge(a: &MergeArgs, json: bool, out: &mut dyn Write) -> Result<i32> {
    let adapter = load_adapter(&a.adapter)?;
    let w = load_weight(&a.weight)?;
    let merged = adapter.merge(&w)?;
    let bytes = crate::format::encode_matrix(&merged)?;
    write_atomic(&a.output, &bytes)?;
    let value = json!({
        "m": merged.rows(),
        "n": merged.cols(),
        "output": a.output.display().to_string(),
        "hash": artifact_hash(&bytes),
    });
    let text = format!(
        "wrote merged {}x{} weight to {}\nhash: {}\n",
        merged.rows(),
        merged.cols(),
        a.output.display(),
        artifact_hash(&bytes)
    );
    emit(out, json, &value, &text)?;
    Ok(0)
}

fn inspect(a: &InspectArgs, json: bool, out: &mut dyn Write) -> Result<i32> {
    let adapter = load_adapter(&a.adapter)?;
    let (m, n) = adapter.dims();
    let sigma = jacobi_svd(&adapter.delta())?.sigma().to_vec();
    let (ranks, residual, defect) = match &adapter {
        AnyAdapter::Lora(l) => (json!({ "r": l.rank() }), false, None),
        AnyAdapter::Nora(l) => (
            json!({ "r_out": l.r_out(), "r_in": l.r_in() }),
            l.residual_init(),
            Some(l.orthonormality_defect()),
        ),
    };
    let value = json!({
        "kind": adapter.kind_name(),
        "m": m,
        "n": n,
        "ranks": ranks,
        "scale": adapter.scale(),
        "residual_init": residual,
        "trainable_params": adapter.trainable_param_count(),
        "delta_singular_values": sigma,
        "orthonormality_defect": defect.map(|(u, v)| json!({ "u": u, "vt": v })),
    });

    let mut text = format!("kind: {}\ndims: {}x{}\n", adapter.kind_name(), m, n);
    match &adapter {
        AnyAdapter::Lora(l) => text.push_str(&format!("rank: {}\n", l.rank())),
        AnyAdapter::Nora(l) => text.push_str(&format!("r_out: {}\nr_in: {}\n", l.r_out(), l.r_in())),
    }
    text.push_str(&format!("scale: {}\n", adapter.scale()));
    text.push_str(&format!("residual_init: {residual}\n"));
    text.push_str(&format!("trainable_params: {}\n", adapter.trainable_param_count()));
    let sv: Vec<String> = sigma.iter().map(|s| format!("{s}")).collect();
    text.push_str(&format!("delta_singular_values: [{}]\n", sv.join(", ")));
    if let Some((du, dv)) = defect {
        text.push_str(&format!("orthonormality_defect: u={du:.3e} vt={dv:.3e}\n"));
    }
    emit(out, json, &value, &text)?;
    Ok(0)
}
