//! Exit codes and outputs of the command-line tool.

use std::path::Path;
use std::process::{Command, Output};

fn chanflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chanflow")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&chanflow(&["--help"])), 0);
    assert_eq!(code(&chanflow(&["--version"])), 0);
}

#[test]
fn usage_errors_exit_three() {
    assert_eq!(code(&chanflow(&[])), 3);
    assert_eq!(code(&chanflow(&["frobnicate"])), 3);
    assert_eq!(code(&chanflow(&["solve", "--grid", "many"])), 3);
}

#[test]
fn config_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"sweep": {"eps": []}}"#).unwrap();
    let o = chanflow(&["sweep", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty"));

    std::fs::write(&bad, r#"{"grid": {"nodes": [33]}, "typo": 1}"#).unwrap();
    assert_eq!(code(&chanflow(&["solve", "--config", bad.to_str().unwrap()])), 3);
    assert_eq!(code(&chanflow(&["solve", "--config", "/nonexistent/cfg.json"])), 3);
    assert_eq!(code(&chanflow(&["solve", "--grid", "4"])), 3);
    assert_eq!(code(&chanflow(&["solve", "--eps", "2"])), 3);
}

#[test]
fn solve_writes_report_and_dump_then_audit_reads_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = chanflow(&["solve", "--grid", "33", "--eps", "0.01", "--out", out, "--dump-fields"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(matches!(code(&o), 0 | 2), "{stdout}");
    assert!(stdout.contains("[PASS] contraction"), "{stdout}");
    for f in ["gaps.csv", "audits.csv", "plots.gp", "summary.json"] {
        assert!(Path::new(out).join(f).exists(), "{f}");
    }
    let dump = Path::new(out).join("fields_eps1e-2_n33.json");
    assert!(dump.exists());
    let a = chanflow(&["audit", "--out", out]);
    assert!(matches!(code(&a), 0 | 2));
    let csv = std::fs::read_to_string(Path::new(out).join("audits_from_dump.csv")).unwrap();
    assert!(csv.starts_with("name,eps,eta,L,grid,p,lhs,rhs,constant\n"));
    assert!(csv.lines().count() > 1);
}

#[test]
fn audit_without_dumps_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&chanflow(&["audit", "--out", dir.path().to_str().unwrap()])), 3);
}
