mod common;

use std::path::Path;
use std::process::Command;

use synsurp::pipeline::write_config;

fn synsurp(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_synsurp"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(synsurp(&[]).status.code(), Some(1));
    assert_eq!(synsurp(&["train"]).status.code(), Some(1));
    assert_eq!(synsurp(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(synsurp(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_config_exits_with_one_and_missing_data_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seeds = []\nout = \"o\"\n").unwrap();
    let out = synsurp(&["train", "--config", arg(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let cfg = common::tiny_config(dir.path(), &[1]);
    let path = dir.path().join("run.toml");
    write_config(&path, &cfg).unwrap();
    let out = synsurp(&["score", "--config", arg(&path)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(synsurp(&["train", "--config", arg(&path), "--k", "0"]).status.code(), Some(1));
}

#[test]
fn flags_override_seeds_and_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny_config(dir.path(), &[1]);
    let path = dir.path().join("run.toml");
    write_config(&path, &cfg).unwrap();
    let out_dir = dir.path().join("elsewhere");
    let out = synsurp(&["train", "--config", arg(&path), "--seed", "5", "--seed", "6", "--out", arg(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("checkpoints/seed_5.sslm").is_file());
    assert!(out_dir.join("checkpoints/seed_6.sslm").is_file());
    assert!(out_dir.join("frequencies.csv").is_file());
    assert!(!cfg.out.exists());
}

#[test]
fn toy_data_writes_a_runnable_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = synsurp(&["toy-data", "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let cfg = synsurp::pipeline::RunConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(cfg.seeds.len(), 4);
    for p in [&cfg.data.supertag_corpus, &cfg.data.items] {
        assert!(p.is_file(), "{}", p.display());
    }
}
