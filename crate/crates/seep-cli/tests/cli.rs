//! End-to-end checks of the `seep` binary: a tiny training run, the oracle
//! and report subcommands, and the exit-code contract.

use std::path::Path;
use std::process::{Command, Output};

fn seep(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seep"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_then_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(
        &cfg,
        "hidden_layers = 2\nwidth = 8\ninterior_points = 40\nboundary_points = 20\n\
         adam_iters = 20\nlbfgs_iters = 3\n",
    )
    .unwrap();

    let out = seep(
        &["run", "test2", "--config", "tiny.cfg", "--out", "run", "--quiet"],
        dir.path(),
    );
    assert!(out.status.success(), "run failed: {}", stderr(&out));
    assert!(dir.path().join("run/report.json").exists());
    assert!(dir.path().join("run/checkpoint.bin").exists());
    let text = stdout(&out);
    assert!(text.contains("test2"), "summary names the benchmark: {text}");

    let rep = seep(&["report", "run"], dir.path());
    assert!(rep.status.success(), "report failed: {}", stderr(&rep));
    assert!(stdout(&rep).contains("test2"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(
        &cfg,
        "hidden_layers = 2\nwidth = 8\ninterior_points = 40\nboundary_points = 20\n\
         adam_iters = 20\nlbfgs_iters = 3\nseed = 7\n",
    )
    .unwrap();
    let out = seep(
        &["run", "test2", "--config", "tiny.cfg", "--seed", "9", "--out", "run", "--quiet"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let report = std::fs::read_to_string(dir.path().join("run/report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["seed"], 9, "the flag beats the file");
    assert_eq!(v["config"]["adam_iters"], 20, "the file beats the defaults");
}

#[test]
fn bad_configuration_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "width = minus-three\n").unwrap();
    let out = seep(&["run", "test2", "--config", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    // A target that is neither a benchmark nor an existing file.
    let out = seep(&["run", "no-such-thing", "--quiet"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn oracle_writes_a_field_and_prints_monitors() {
    let dir = tempfile::tempdir().unwrap();
    let out = seep(
        &["oracle", "test2", "--resolution", "61", "--out", "oracle"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("oracle/oracle.csv")).unwrap();
    assert!(csv.starts_with("x,y,h\n"));
    assert!(csv.lines().count() > 1000, "a 61-node grid has plenty of rows");
    assert!(stdout(&out).contains("h(120, 80)"), "monitor heads printed");
}

#[test]
fn oracle_has_no_grid_solver_for_the_free_surface_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let out = seep(&["oracle", "test3"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("experiment table"));
}

#[test]
fn report_on_a_missing_directory_fails_plainly() {
    let dir = tempfile::tempdir().unwrap();
    let out = seep(&["report", "nowhere"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("report.json"));
}
