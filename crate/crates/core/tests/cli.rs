mod common;

use std::path::Path;
use std::process::Command;

fn hmlab(args: &[&str], dir: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_hmlab"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "off")
        .status()
        .unwrap()
        .code()
        .unwrap()
}

fn with_config(text: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), text).unwrap();
    dir
}

#[test]
fn missing_config_fails_at_the_config_stage() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hmlab(&["generate", "--config", "absent.toml"], dir.path()), 2);
    assert_eq!(hmlab(&["generate"], dir.path()), 2);
}

#[test]
fn stages_need_their_inputs() {
    let dir = with_config(common::TINY_SINGLE_PHASE);
    let base = ["--config", "exp.toml", "--out", "out"];
    let run = |stage: &[&str]| hmlab(&[stage, &base[..]].concat(), dir.path());
    assert_eq!(run(&["approx", "--method", "enkf"]), 5);
    assert_eq!(run(&["mcmc"]), 4);
    assert_eq!(run(&["generate"]), 0);
    assert_eq!(run(&["evaluate"]), 6);
    assert_eq!(run(&["approx", "--method", "no-such-method"]), 5);
    assert_eq!(run(&["approx", "--method", "enkf"]), 0);
    assert_eq!(run(&["mcmc"]), 0);
    assert_eq!(run(&["evaluate"]), 0);
    assert_eq!(run(&["report"]), 0);
    assert!(dir.path().join("out/report.json").exists());
}

#[test]
fn seed_flag_changes_the_data() {
    let dir = with_config(common::TINY_SINGLE_PHASE);
    assert_eq!(hmlab(&["generate", "--config", "exp.toml", "--out", "a"], dir.path()), 0);
    assert_eq!(hmlab(&["generate", "--config", "exp.toml", "--out", "b", "--seed", "99"], dir.path()), 0);
    let read = |d: &str| std::fs::read(dir.path().join(d).join("data/observations.csv")).unwrap();
    assert_ne!(read("a"), read("b"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_ne!(hmlab(&["frobnicate"], dir.path()), 0);
}
