use std::path::Path;
use std::process::{Command, Output};

fn quartic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quartic"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_then_solve_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p.json");
    let out = quartic(&["gen", "--kind", "planted", "--d", "4", "--n", "12", "--seed", "3", "--out", path(&file)]);
    assert!(out.status.success());

    let run = || quartic(&["solve", "--input", path(&file), "--eps", "1e-8", "--trace"]);
    let (a, b) = (run(), run());
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);

    let text = String::from_utf8(a.stdout).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let summary = lines.last().unwrap();
    assert!(summary["certified_gap"].as_f64().unwrap() <= 1e-8);
    assert!(summary["true_gap"].as_f64().unwrap() <= 1e-8);
    // one trace record per accepted or early-exit iteration
    assert!(lines.len() > 1);
    assert!(lines[..lines.len() - 1].iter().all(|l| l.get("k").is_some()));
}

#[test]
fn gen_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        assert!(quartic(&["gen", "--kind", "l4", "--d", "2", "--n", "4", "--seed", "7", "--out", path(p)]).status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn l4_objective_includes_constant() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("l4.json");
    std::fs::write(&file, r#"{"kind":"l4","A":[[1.0,0.0],[0.0,1.0],[1.0,1.0]],"b":[1.0,2.0,3.0],"c":[0.0,0.0]}"#).unwrap();
    let out = quartic(&["solve", "--input", path(&file)]);
    assert!(out.status.success());
    let s: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let (f, obj) = (s["f_final"].as_f64().unwrap(), s["objective"].as_f64().unwrap());
    // ‖b‖₄⁴ = 1 + 16 + 81; b lies in the range of A, so the optimum is 0
    assert!((obj - f - 98.0).abs() < 1e-9);
    assert!(obj.abs() < 1e-6);
}

#[test]
fn solve_writes_summary_and_trace_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.json");
    let status = quartic(&["solve", "--d", "3", "--n", "9", "--trace", "--baseline", "newton", "--out", path(&out)]);
    assert!(status.status.success());
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(summary["baseline"]["agreement"].as_f64().unwrap() <= 2e-8);
    assert!(dir.path().join("run.json.trace.jsonl").exists());
}

#[test]
fn invalid_input_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"kind":"l4","A":[[1.0,0.0]],"b":[1.0],"c":[0.0,0.0]}"#).unwrap();
    // AᵀA is singular
    assert_eq!(quartic(&["solve", "--input", path(&bad)]).status.code(), Some(2));
    assert_eq!(quartic(&["solve", "--input", path(&dir.path().join("missing.json"))]).status.code(), Some(2));
    assert_eq!(quartic(&["solve", "--eps", "-1"]).status.code(), Some(2));
    assert_eq!(
        quartic(&["gen", "--kind", "cubic", "--d", "2", "--n", "2", "--out", path(&bad)]).status.code(),
        Some(2)
    );
}

#[test]
fn epoch_cap_exits_with_3() {
    let out = quartic(&["solve", "--d", "6", "--n", "40", "--eps", "1e-14", "--max-epochs", "1"]);
    assert_eq!(out.status.code(), Some(3));
    // the summary is still written
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["exit_reason"], "epoch-cap");
}

#[test]
fn check_commands_pass() {
    assert_eq!(quartic(&["derivcheck", "--instances", "6"]).status.code(), Some(0));
    let out = quartic(&["propcheck", "--instances", "1", "--d", "3", "--n", "12", "--pairs", "100"]);
    assert_eq!(out.status.code(), Some(0));
    let last: serde_json::Value =
        serde_json::from_str(String::from_utf8(out.stdout).unwrap().lines().last().unwrap()).unwrap();
    assert_eq!(last["printed_modulus_refuted"], true);
}

#[test]
fn bench_emits_rows_and_summary() {
    let out = quartic(&["bench", "--ns", "16,64", "--d", "3", "--instances", "1", "--eps", "1e-6"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[2]["summary"]["rho_violations"], 0);
}
