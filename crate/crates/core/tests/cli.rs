use std::process::Command;

use iga_mortar::experiments::{CSV_HEADER, TABLE1_HEADER};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_iga-mortar"))
}

#[test]
fn study_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m1.csv");
    let status = bin()
        .args(["study", "--case", "M1", "--degree", "2", "--strategy", "slave", "--quad-order", "1", "--levels", "3"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 4);
    let again = bin()
        .args(["study", "--case", "M1", "--degree", "2", "--strategy", "slave", "--quad-order", "1", "--levels", "3"])
        .output()
        .unwrap();
    assert_eq!(String::from_utf8(again.stdout).unwrap(), csv);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.cfg");
    std::fs::write(&cfg, "case=M3\ndegree=2\nlevels=5\nstrategy=nonsymmetric\n").unwrap();
    let out = bin().arg("study").arg("--config").arg(&cfg).args(["--levels", "2"]).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 3);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("# strategy=nonsymmetric"));
    assert!(stderr.contains("# levels=2"));
}

#[test]
fn errors_are_reported_on_one_line() {
    let out = bin().args(["study", "--case", "M1", "--degree", "7"]).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.lines().any(|l| l.starts_with("error: config: ")), "{stderr}");

    let out = bin().args(["study", "--case", "M3", "--degree", "1", "--dual", "M2"]).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.lines().any(|l| l.starts_with("error: unsupported_pairing: ")), "{stderr}");
}

#[test]
fn parity_mismatch_is_flagged() {
    let out = bin().args(["study", "--case", "M3", "--degree", "4", "--dual", "P1", "--levels", "2"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("# parity_mismatch=true"));
}

#[test]
fn table_has_twelve_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("table1.csv");
    let status = bin().args(["table1", "--levels", "2", "--out"]).arg(&out).status().unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], TABLE1_HEADER);
    assert_eq!(lines.len(), 13);
}
