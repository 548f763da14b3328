use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bellrm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bellrm"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn bellrm")
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path
}

fn short_config(seed: u64, duration_s: f64) -> String {
    format!(
        r#"{{
  "run": {{ "run_duration_s": {duration_s}, "seed": {seed}, "dark_rate_hz": 1000.0 }},
  "analysis": {{ "ergodicity": {{ "n_samples": 2000 }}, "window_scan_ns": [1, 10, 100] }}
}}"#
    )
}

fn simulate(tmp: &TempDir, out: &str, config: &str) -> PathBuf {
    let cfg = write_config(tmp.path(), &format!("{out}.json"), config);
    let dir = tmp.path().join(out);
    let o = bellrm(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert!(o.status.success(), "simulate failed: {}", String::from_utf8_lossy(&o.stderr));
    dir
}

fn analyze(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["analyze", "--in", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    bellrm(&args)
}

fn chsh_counts(dir: &Path) -> Vec<(String, u64)> {
    let mut r = csv::Reader::from_path(dir.join("chsh.csv")).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].to_string(), rec[1].parse().unwrap())
        })
        .collect()
}

#[test]
fn simulate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let a = simulate(&tmp, "a", &short_config(7, 0.2));
    let b = simulate(&tmp, "b", &short_config(7, 0.2));
    let c = simulate(&tmp, "c", &short_config(8, 0.2));
    let bytes = |d: &Path| fs::read(d.join("run.btag")).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    assert_ne!(bytes(&a), bytes(&c));
    assert!(!a.join(".bellrm.lock").exists());
}

#[test]
fn manifest_echoes_config_and_digest() {
    let tmp = TempDir::new().unwrap();
    let dir = simulate(&tmp, "run", &short_config(11, 0.1));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 11);
    assert_eq!(m["config"]["run"]["run_duration_s"], 0.1);
    assert_eq!(m["config"]["model"]["kind"], "QM_NONLOCAL");
    let art = &m["artifacts"]["run.btag"];
    assert_eq!(art["bytes"], fs::metadata(dir.join("run.btag")).unwrap().len());
    assert_eq!(art["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn empty_run_is_inconclusive() {
    let tmp = TempDir::new().unwrap();
    let dir = simulate(&tmp, "empty", &short_config(1, 0.0));
    assert_eq!(fs::metadata(dir.join("run.btag")).unwrap().len(), 32);
    let o = analyze(&dir, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("verdict.json")).unwrap()).unwrap();
    assert_eq!(v["label"], "INCONCLUSIVE");
    assert!(v["reason"].as_str().unwrap().contains("no data"));
}

#[test]
fn truncated_file_reports_offset() {
    let tmp = TempDir::new().unwrap();
    let dir = simulate(&tmp, "run", &short_config(2, 0.05));
    let path = dir.join("run.btag");
    let bytes = fs::read(&path).unwrap();
    assert!(bytes.len() > 32 + 16 * 3);
    fs::write(&path, &bytes[..32 + 16 * 3 + 5]).unwrap();
    let o = analyze(&dir, &[]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("byte offset"), "{err}");
}

#[test]
fn invalid_config_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", r#"{ "analysis": { "n_slices": 1 } }"#);
    let out = tmp.path().join("out");
    let o = bellrm(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("analysis.n_slices"));

    let cfg = write_config(tmp.path(), "unknown.json", r#"{ "run": { "sede": 3 } }"#);
    let o = bellrm(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sede"));
}

#[test]
fn finer_slicing_refines_coarser() {
    let tmp = TempDir::new().unwrap();
    let dir = simulate(&tmp, "run", &short_config(5, 0.2));
    assert!(analyze(&dir, &["--slices", "2"]).status.success());
    let two = chsh_counts(&dir);
    assert!(analyze(&dir, &["--slices", "4"]).status.success());
    let four = chsh_counts(&dir);
    assert_eq!(two.len(), 3);
    assert_eq!(four.len(), 5);
    assert_eq!(two[0].1, four[0].1 + four[1].1);
    assert_eq!(two[1].1, four[2].1 + four[3].1);
    assert_eq!(two[2], four[4]);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["analysis"]["n_slices"], 4);
}

#[test]
fn report_lists_runs_in_order() {
    let tmp = TempDir::new().unwrap();
    let first = simulate(&tmp, "first", &short_config(3, 0.1));
    let second = simulate(&tmp, "second", &short_config(4, 0.1));
    for d in [&first, &second] {
        assert!(analyze(d, &[]).status.success());
    }
    let out = tmp.path().join("summary");
    let o = bellrm(&[
        "report",
        "--in",
        second.to_str().unwrap(),
        first.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert_eq!(summary.lines().filter(|l| l.starts_with("verdict: ")).count(), 2);
    let pos = |d: &Path| summary.find(&format!("== run {} ==", d.display())).unwrap();
    assert!(pos(&second) < pos(&first));
    let curves = fs::read_to_string(out.join("curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 2 * 2);

    let single = bellrm(&["report", "--in", first.to_str().unwrap()]);
    assert!(single.status.success());
    let text = String::from_utf8_lossy(&single.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("verdict: ")).count(), 1);
}

#[test]
fn report_lists_every_missing_file() {
    let tmp = TempDir::new().unwrap();
    let dir = simulate(&tmp, "raw", &short_config(6, 0.05));
    let o = bellrm(&["report", "--in", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    for f in ["chsh.csv", "curve.csv", "verdict.json"] {
        assert!(err.contains(f), "{f} not listed: {err}");
    }
    assert!(!err.contains("manifest.json"));
}

#[test]
fn locked_directory_is_refused() {
    let tmp = TempDir::new().unwrap();
    let dir = simulate(&tmp, "run", &short_config(9, 0.05));
    fs::write(dir.join(".bellrm.lock"), b"").unwrap();
    let o = analyze(&dir, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("locked"));
}
