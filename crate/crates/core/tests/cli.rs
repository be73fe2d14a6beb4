//! The `lshape` binary: artifacts, exit codes, error records.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use loss_shaping::eval::{parse_numeric_csv, ComparisonReport, EvalReport};
use loss_shaping::record::Record;

const BASE: &str = "synth.length = 700
window.context_len = 12
window.pred_len = 6
model.hidden = 4
train.epochs = 3
";

fn lshape(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lshape")).args(args).output().unwrap()
}

fn config(dir: &Path, name: &str, extra: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, format!("{BASE}{extra}")).unwrap();
    path
}

fn train(cfg: &Path, out: &Path) -> Output {
    lshape(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn error_kind(out: &Output) -> String {
    let rec = Record::parse("error", &String::from_utf8_lossy(&out.stderr)).unwrap();
    rec.require("kind").unwrap().to_string()
}

fn erm_run(dir: &Path) -> PathBuf {
    let out = dir.join("erm");
    let o = train(&config(dir, "erm.cfg", ""), &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn train_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = erm_run(tmp.path());
    for f in ["checkpoint.txt", "trace.txt", "report.txt", "val_report.txt", "train_report.txt", "curve.csv", "summary.csv", "config.txt"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let rows = parse_numeric_csv(&fs::read_to_string(out.join("curve.csv")).unwrap(), &["step", "mse"]).unwrap();
    assert_eq!(rows.len(), 6);
    let report = EvalReport::parse(&fs::read_to_string(out.join("report.txt")).unwrap()).unwrap();
    assert_eq!(report.mode, "erm");
    assert_eq!(report.fingerprint.len(), 16);
}

#[test]
fn same_seed_same_bytes_other_seed_differs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.cfg", "");
    let run = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        let o = lshape(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(o.status.success());
        fs::read(out.join("report.txt")).unwrap()
    };
    assert_eq!(run("a", "5"), run("b", "5"));
    assert_ne!(run("a", "5"), run("c", "6"));
}

#[test]
fn constrained_without_levels_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = train(&config(tmp.path(), "c.cfg", "train.mode = constrained\n"), &out);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "ConfigInvalid");
    let rec = Record::read(&out.join("error.txt")).unwrap();
    assert_eq!(rec.get("exit_code"), Some("2"));
}

#[test]
fn unknown_key_and_bad_flag_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let o = train(&config(tmp.path(), "c.cfg", "train.learning_rate = 1\n"), &tmp.path().join("r"));
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(lshape(&["train", "--bogus"]).status.code(), Some(2));
}

#[test]
fn grid_without_erm_run_is_missing_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let extra = format!("train.mode = constrained\nconstraint.source = grid\nconstraint.erm_run = {}\n", tmp.path().join("none").display());
    let cfg = config(tmp.path(), "g.cfg", &extra);
    let o = lshape(&["grid", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("g").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "MissingErmTrace");
}

#[test]
fn grid_completes_with_an_infeasible_candidate() {
    let tmp = tempfile::tempdir().unwrap();
    let erm = erm_run(tmp.path());
    // validation levels far below anything attainable
    let fake = EvalReport::from_step_mse(vec![1e-6; 6], 10).with_labels("erm", "0");
    fs::write(erm.join("val_report.txt"), fake.to_record_string()).unwrap();
    let extra = format!("train.mode = constrained\nconstraint.source = grid\nconstraint.erm_run = {}\n", erm.display());
    let cfg = config(tmp.path(), "g.cfg", &extra);
    let out = tmp.path().join("g");
    let o = lshape(&["grid", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tight = EvalReport::parse(&fs::read_to_string(out.join("candidate_3/report.txt")).unwrap()).unwrap();
    assert!(tight.max_violation.unwrap() > 0.0);
    let best = Record::read(&out.join("best.txt")).unwrap();
    assert_eq!(best.parse_key::<usize>("candidates").unwrap(), 6);
}

#[test]
fn compare_self_and_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let erm = erm_run(tmp.path());
    let report = erm.join("report.txt");
    let out = tmp.path().join("cmp");
    let o = lshape(&["compare", report.to_str().unwrap(), report.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let cmp = ComparisonReport::parse(&fs::read_to_string(out.join("comparison.txt")).unwrap()).unwrap();
    assert_eq!((cmp.mse_pct_change, cmp.std_pct_change), (0.0, 0.0));
    let merged = parse_numeric_csv(&fs::read_to_string(out.join("merged.csv")).unwrap(), &["step", "mse_baseline", "mse_candidate"]).unwrap();
    assert_eq!(merged.len(), 6);

    let short = tmp.path().join("short.txt");
    fs::write(&short, EvalReport::from_step_mse(vec![1.0, 2.0], 3).to_record_string()).unwrap();
    let o = lshape(&["compare", report.to_str().unwrap(), short.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_kind(&o), "ReportMismatch");
}

#[test]
fn missing_csv_and_synth_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "s.cfg", "");
    let o = lshape(&["synth", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("s").to_str().unwrap()]);
    assert!(o.status.success());
    let text = fs::read_to_string(tmp.path().join("s/series.csv")).unwrap();
    assert_eq!(text.lines().count(), 701);

    let csv = tmp.path().join("series.csv");
    fs::write(&csv, &text).unwrap();
    let ok = format!("data.source = csv\ndata.path = {}\n", csv.display());
    assert!(train(&config(tmp.path(), "csv.cfg", &ok), &tmp.path().join("c")).status.success());
    let bad = config(tmp.path(), "bad.cfg", "data.source = csv\ndata.path = /nonexistent/x.csv\n");
    assert_eq!(train(&bad, &tmp.path().join("b")).status.code(), Some(2));
}
