use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs"].iter().collect()
}

fn grane(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grane"))
        .args(args)
        .env("GRANE_OUTPUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_g2_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("g2.json");
    let out = grane(&["run", cfg.to_str().unwrap()], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["grane_trace.csv", "acc-grane_trace.csv", "centralized_trace.csv", "summary.json", "plot_data.csv"] {
        assert!(tmp.path().join(f).is_file(), "missing {f}");
    }
    let trace = fs::read_to_string(tmp.path().join("grane_trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("k,fro_residual,relative_error,consensus_gap,vi_residual"));

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    let grane_run = &summary["runs"][0];
    assert!((grane_run["constants"]["gamma"].as_f64().unwrap() - 6.4721).abs() < 1e-4);
    assert!((grane_run["step"].as_f64().unwrap() - 0.047746).abs() < 1e-6);
    assert!(grane_run["iterations_to"]["1e-6"].as_u64().is_some());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = configs().join("g2.json");
    assert!(grane(&["run", cfg.to_str().unwrap()], a.path()).status.success());
    assert!(grane(&["run", cfg.to_str().unwrap()], b.path()).status.success());
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for name in names {
        assert_eq!(
            fs::read(a.path().join(&name)).unwrap(),
            fs::read(b.path().join(&name)).unwrap(),
            "{name:?} differs"
        );
    }
}

#[test]
fn validate_reports_clean_and_warning_configs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("g2.json");
    let out = grane(&["validate", cfg.to_str().unwrap()], tmp.path());
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");

    let g2 = fs::read_to_string(&cfg).unwrap();
    let g2r_lemma2 = g2.replace("[[0.0, 1.0], [-1.0, 0.0]]", "[[0.0, 3.0], [-3.0, 0.0]]");
    let path = write_config(tmp.path(), "g2r_lemma2.json", &g2r_lemma2);
    let out = grane(&["validate", path.to_str().unwrap()], tmp.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("μ_Fa undefined; use lemma3"));

    let out = grane(&["run", path.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lemma3"));
}

#[test]
fn schema_error_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(
        tmp.path(),
        "bad.json",
        r#"{"game": {"type": "quadratic", "n": 4}, "graph": {"type": "path", "mixing": "metropolis"},
            "solvers": [{"algorithm": "grane", "max_iters": 5}], "output": {"dir": "x"}}"#,
    );
    let out = grane(&["run", path.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));

    let out = grane(&["validate", path.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed"));
}

#[test]
fn divergence_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(
        tmp.path(),
        "diverge.json",
        r#"{"game": {"type": "inline", "n": 2, "a": [2, 2], "b": [-2, 0], "C": [[0, 1], [-1, 0]],
                     "boxes": [[null, null], [null, null]]},
            "graph": {"type": "path", "mixing": "lazy-laplacian"},
            "solvers": [{"algorithm": "grane", "step": 5.0, "max_iters": 5000}],
            "output": {"dir": "x"}}"#,
    );
    let out = grane(&["run", path.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_file_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = grane(&["run", tmp.path().join("nope.json").to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn constants_prints_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("g2r.json");
    let out = grane(&["constants", cfg.to_str().unwrap()], tmp.path());
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let run = &report["runs"][0]["constants"];
    assert!(run["mu_r_Fa"].as_f64().unwrap() > 0.0);
    assert!(run.get("mu_Fa").is_none());
    assert!((run["gamma"].as_f64().unwrap() - run["L_Fa"].as_f64().unwrap() / run["mu_r_Fa"].as_f64().unwrap()).abs() < 1e-6);
}
