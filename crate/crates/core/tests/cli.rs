//! Runs the built binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_swipt-ee");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, extra: &str) -> PathBuf {
    let base = std::fs::read_to_string(configs().join("default.cfg")).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, format!("{base}\n{extra}\n")).unwrap();
    path
}

#[test]
fn help_and_bad_usage() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["solve"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    let missing = run(&["solve", "--config", "/nonexistent/x.cfg"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(!missing.stderr.is_empty());
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "bogus_key = 3");
    let out = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("bogus_key"), "{msg}");
}

#[test]
fn fixed_channel_solve_is_reproducible_and_finds_the_known_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fig.cfg", "g2_a = 1.0571\ng2_b = 1.4131");
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("# swipt-ee solve v1"));
    // 4 x 3 cap gives 20 pairs minus the all-zero one
    let rows = text.lines().filter(|l| !l.starts_with('#')).count();
    assert!(rows >= 19, "{text}");
}

#[test]
fn stdout_matches_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fig.cfg", "g2_a = 1.0571\ng2_b = 1.4131");
    let file = dir.path().join("c.csv");
    let to_file = run(&["converge", "--config", cfg.to_str().unwrap(), "--out", file.to_str().unwrap()]);
    let to_stdout = run(&["converge", "--config", cfg.to_str().unwrap()]);
    assert_eq!(to_file.status.code(), Some(0));
    assert_eq!(std::fs::read(&file).unwrap(), to_stdout.stdout);
}

#[test]
fn negative_slope_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "neg.cfg", "").to_str().unwrap().to_owned();
    let text = std::fs::read_to_string(&cfg).unwrap().replace("0.3899", "-0.3899");
    std::fs::write(&cfg, text).unwrap();
    let out = run(&["validate", "--config", &cfg, "--trials", "1"]);
    let msg = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(2), "{msg}");
    assert!(msg.contains("harvester curve"), "{msg}");
}

#[test]
fn loosened_stopping_tolerance_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "eps.cfg", "dinkelbach_eps = 0.1\noracle_points = 5\noracle_rounds = 0");
    let out = run(&["validate", "--config", cfg.to_str().unwrap(), "--trials", "2"]);
    let msg = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(2), "{msg}");
    assert!(msg.contains("root property"), "{msg}");
}
