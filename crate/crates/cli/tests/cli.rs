//! Exit codes and artifacts of the `gietlab` binary.

use std::path::Path;
use std::process::{Command, Output};

fn gietlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gietlab")).current_dir(dir).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn error_kind(out: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).expect("stderr is one JSON object");
    v["error"]["kind"].as_str().unwrap().to_string()
}

#[test]
fn bad_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.toml", "scenario = \"tpg\"\n[budget]\ndepth = 0\n");
    let out = gietlab(dir.path(), &["validate", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "config");
}

#[test]
fn rational_rotation_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "rational.toml", "scenario = \"sbs-decay\"\n[giet]\nkind = \"rotation\"\nalpha = \"0.5\"\n");
    let out = gietlab(dir.path(), &["run", "--config", "rational.toml", "--out", "out"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_kind(&out), "numerical-connection");
}

#[test]
fn run_writes_a_manifest_of_its_files() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "rot.toml", "scenario = \"rotation-sanity\"\nseed = 3\n[samples]\nrotations = 5\n");
    let out = gietlab(dir.path(), &["run", "--config", "rot.toml", "--out", "out"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    let files: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    for name in ["summary.json", "config.json", "quotients.csv"] {
        assert!(files.contains(&name), "{name} missing from {files:?}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["all_matched"], true);
}

#[test]
fn tpg_prints_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = gietlab(dir.path(), &["tpg", "--steps", "5", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,norm_a,norm_q"));
    assert_eq!(lines.next(), Some("0,5,5"));
}
