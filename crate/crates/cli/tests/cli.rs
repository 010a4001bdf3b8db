use std::path::Path;
use std::process::{Command, Output};

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repro-audit"))
        .current_dir(dir)
        .args(["--out-dir", "out", "--cache-dir", "cache", "--allow-host", "127.0.0.1"])
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn validate_config_prints_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["validate-config", "--json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.get("out_dir").is_some(), "{v}");

    let out = cli(dir.path(), &["validate-config"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("out_dir"));
}

#[test]
fn bad_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "no_such_key = 1\n").unwrap();
    let out = cli(dir.path(), &["--config", "bad.toml", "validate-config"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn stage_without_predecessor_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["screen"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ingest"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn audit_of_unsupported_host_reports_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["audit", "https://bitbucket.org/lab/model", "--json"]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["outcome"], "unsupported_provider");
    assert_eq!(v["url"], "https://bitbucket.org/lab/model");
}
