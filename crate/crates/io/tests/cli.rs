use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nora_core::{AnyAdapter, Matrix, NoraAdapter};
use nora_io::format::{load_matrix, save_adapter, save_matrix};

fn nora(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nora")).args(args).output().expect("spawn nora")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn gradcheck_passes_on_fixtures() {
    for name in ["nora_32x24.nora", "lora_32x24.nora"] {
        let o = nora(&["gradcheck", "--adapter", s(&fixture(name))]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
        assert!(stdout(&o).contains("result: pass"));
    }
}

#[test]
fn budget_example_row() {
    let o = nora(&[
        "--json", "budget", "--layers", "32", "--per-layer", "4", "--hidden", "4096", "--lora-rank", "16",
        "--r-out", "64", "--r-in", "16",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let row = &v["rows"][0];
    assert_eq!(row["lora_params"], 16_777_216u64);
    assert_eq!(row["nora_params"], 262_144u64);
    assert_eq!(row["ratio"], 64.0);
    assert!(v["assumptions"].as_array().unwrap().len() >= 3);
}

#[test]
fn inspect_reports_scaled_delta_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let w = Matrix::from_diag(&[4.0, 1.0]);
    let ad = NoraAdapter::from_weight(&w, 1, 1, 2.5).unwrap();
    let path = dir.path().join("diag.nora");
    save_adapter(&AnyAdapter::Nora(ad), &path).unwrap();
    let o = nora(&["--json", "inspect", "--adapter", s(&path)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let sv: Vec<f64> = serde_json::from_value(v["delta_singular_values"].clone()).unwrap();
    assert!((sv[0] - 10.0).abs() < 1e-12 && sv[1].abs() < 1e-12, "{sv:?}");
    assert_eq!(v["trainable_params"], 2);
}

#[test]
fn residual_init_then_merge_recovers_weight() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.nora");
    let base = dir.path().join("base.nora");
    let ad = dir.path().join("a.nora");
    let merged = dir.path().join("m.nora");
    save_matrix(&nora_core::rng::synthetic_weight(12, 9, 4), &w).unwrap();
    let o = nora(&[
        "init", "--weight", s(&w), "--r-out", "4", "--r-in", "2", "--residual", "--base-out", s(&base), "-o",
        s(&ad),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = nora(&["merge", "--adapter", s(&ad), "--weight", s(&base), "-o", s(&merged)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let diff = load_matrix(&merged).unwrap().sub(&load_matrix(&w).unwrap()).unwrap();
    assert!(diff.max_abs() < 1e-12);
}

#[test]
fn train_writes_history_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.nora");
    let hist = dir.path().join("h.csv");
    let o = nora(&[
        "train", "--adapter", s(&fixture("nora_32x24.nora")), "--task", "lowrank:32:24:2:1", "--steps", "20",
        "--opt", "sgd", "--lr", "0.05", "-o", s(&out), "--history", s(&hist),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let losses = nora_io::history::read_history(&hist).unwrap();
    assert_eq!(losses.len(), 20);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("t.nora.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["optimizer"], "sgd");
    assert_eq!(manifest["final_loss"].as_f64().unwrap(), *losses.last().unwrap());
    let hash = nora_io::manifest::artifact_hash(&std::fs::read(&out).unwrap());
    assert_eq!(manifest["artifacts"]["adapter_out"], hash);
}

#[test]
fn residual_adapter_without_base_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let ad = dir.path().join("a.nora");
    let base = dir.path().join("b.nora");
    nora(&["init", "--weight", "gen:8x6:1", "--r-out", "3", "--r-in", "1", "--residual", "--base-out", s(&base), "-o", s(&ad)]);
    let o = nora(&["train", "--adapter", s(&ad), "--task", "lowrank:8:6:1:1", "-o", "x", "--history", "y"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn error_paths_are_single_line() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.nora");
    std::fs::write(&junk, b"not an adapter at all").unwrap();
    let cases: [(&[&str], i32); 5] = [
        (&["inspect"], 2),
        (&["init", "--weight", "gen:8x8", "--r-out", "2", "--r-in", "1", "-o", "x"], 2),
        (&["init", "--weight", "gen:8x8:1", "--r-out", "9", "--r-in", "1", "-o", "x"], 1),
        (&["inspect", "--adapter", s(&junk)], 1),
        (&["budget", "--layers", "0", "--per-layer", "1", "--hidden", "8", "--lora-rank", "1", "--r-out", "1", "--r-in", "1"], 1),
    ];
    for (args, code) in cases {
        let o = nora(args);
        assert_eq!(o.status.code(), Some(code), "{args:?}: {}", stderr(&o));
        let err = stderr(&o);
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("error:"), "{err}");
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(nora(&["--help"]).status.code(), Some(0));
    assert_eq!(nora(&["--version"]).status.code(), Some(0));
}
