// Licensed under the Apache-2.0 license

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn softip(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_softip"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn cfg(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

#[test]
fn run_simple_on_demo_config_succeeds() {
    let d = tempfile::tempdir().unwrap();
    let o = softip(d.path(), &["run", "--flow", "simple"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("conformance: ok"));
    assert!(d.path().join("softip-transcript.txt").exists());
}

#[test]
fn malformed_config_exits_one() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("bad.toml"), "scheme = 3\n").unwrap();
    assert_eq!(code(&softip(d.path(), &["run", "--config", "bad.toml"])), 1);
    assert_eq!(code(&softip(d.path(), &["run", "--config", "missing.toml"])), 1);
}

#[test]
fn unknown_verb_prints_usage_and_exits_one() {
    let d = tempfile::tempdir().unwrap();
    let o = softip(d.path(), &["frobnicate"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn advanced_runs_with_same_seed_write_identical_transcripts() {
    let d = tempfile::tempdir().unwrap();
    for out in ["a.txt", "b.txt"] {
        let o = softip(d.path(), &["run", "--flow", "advanced", "--seed", "7", "--out", out]);
        assert_eq!(code(&o), 0);
    }
    let a = std::fs::read(d.path().join("a.txt")).unwrap();
    assert_eq!(a, std::fs::read(d.path().join("b.txt")).unwrap());
    let o = softip(
        d.path(),
        &["replay", "--transcript", "a.txt", "--flow", "advanced", "--seed", "7"],
    );
    assert_eq!(code(&o), 0);
    let o = softip(
        d.path(),
        &["replay", "--transcript", "a.txt", "--flow", "advanced", "--seed", "8"],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn adversary_abort_exits_two() {
    let d = tempfile::tempdir().unwrap();
    let o = softip(d.path(), &["run", "--adversary", &cfg("tamper-forward.toml")]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("abort SWP AuthenticationFailure"));
}

#[test]
fn bundled_small_suite_passes() {
    let d = tempfile::tempdir().unwrap();
    let o = softip(d.path(), &["attack", "--suite", &cfg("suite-small.toml")]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS\t")).count(), 4);
}

#[test]
fn wrong_expectation_names_the_failing_scenario() {
    let d = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("suite-small.toml"))
        .unwrap()
        .replace(
            "expect_error = \"AttestationRogue\"",
            "expect_error = \"AttestationInvalid\"",
        );
    std::fs::write(d.path().join("s.toml"), text).unwrap();
    let o = softip(d.path(), &["attack", "--suite", "s.toml"]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("FAIL\trogue device"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rogue device"));
}

#[test]
fn empty_suite_is_a_zero_row_pass() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("empty.toml"), "").unwrap();
    let o = softip(d.path(), &["attack", "--suite", "empty.toml"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "# 0 scenarios, 0 pass, 0 fail");
}

#[test]
fn scan_separates_honest_from_leaky_transcripts() {
    let d = tempfile::tempdir().unwrap();
    let run = |conf: &str, out: &str, sec: &str| {
        let o = softip(
            d.path(),
            &["run", "--config", &cfg(conf), "--out", out, "--secrets-out", sec],
        );
        assert_eq!(code(&o), 0);
    };
    run("simple.toml", "h.txt", "h.sec");
    run("leak.toml", "l.txt", "l.sec");
    let o = softip(d.path(), &["scan", "--transcript", "h.txt", "--secrets", "h.sec"]);
    assert_eq!(code(&o), 0);
    let o = softip(d.path(), &["scan", "--transcript", "l.txt", "--secrets", "l.sec"]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("SWP -> DEBUG [debug-leak]"));
    let o = softip(d.path(), &["scan", "--transcript", "nope.txt", "--secrets", "h.sec"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn daa_demo_checks_out() {
    let d = tempfile::tempdir().unwrap();
    let o = softip(d.path(), &["daa-demo"]);
    assert_eq!(code(&o), 0);
    assert!(!stdout(&o).contains("UNEXPECTED"));
    assert!(stdout(&o).contains("RejectRogue"));
}
