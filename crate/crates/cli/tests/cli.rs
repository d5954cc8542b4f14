//! Exit-code and output contracts of the binary.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_setiscan"))
}

#[test]
fn metrics_from_cm_succeeds_on_shipped_example() {
    let example = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/example_confusion.txt");
    let output = bin().arg("metrics-from-cm").arg(&example).output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("narrowband"));
    assert!(text.contains("macro avg"));
}

#[test]
fn errors_exit_nonzero_with_a_diagnostic() {
    let output = bin()
        .args(["metrics-from-cm", "/nonexistent/matrix.txt"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.starts_with("error:"), "stderr: {stderr}");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "1 2 3").unwrap();
    let output = bin().arg("metrics-from-cm").arg(&bad).output().unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("square"));
}

#[test]
fn unknown_arm_is_rejected() {
    let output = bin()
        .args(["preprocess", "--arm", "prewitt"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("unknown arm"));
}

#[test]
fn json_output_parses() {
    let example = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/example_confusion.txt");
    let output = bin()
        .args(["metrics-from-cm", "--json"])
        .arg(&example)
        .output()
        .unwrap();
    assert!(output.status.success());
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert!(report.get("accuracy").is_some());
    assert!(report.get("macro_f1").is_some());
}
