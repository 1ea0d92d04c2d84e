use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sgpts(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgpts"))
        .args(args)
        .current_dir(dir)
        .env("SGPTS_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) {
    fs::write(dir.join("run.cfg"), body).unwrap();
}

const SMALL: &str = "objective = bumps1d\nT = 6\nB = 3\nm = 8\n";

#[test]
fn run_writes_one_log_per_seed_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), SMALL);
    let out = sgpts(&["run", "--config", "run.cfg", "--seeds", "1,2,3", "--out", "res/nested"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = dir.path().join("res/nested");
    for s in 1..=3 {
        let run = fs::read_to_string(res.join(format!("run_{s}.csv"))).unwrap();
        assert_eq!(run.lines().count(), 1 + 6 * 3);
        assert!(res.join(format!("run_{s}_steps.csv")).exists());
    }
    let summary = fs::read_to_string(res.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert!(summary.lines().skip(1).all(|l| l.split(',').nth(1) == Some("ok")));
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), SMALL);
    for o in ["a", "b"] {
        let out = sgpts(&["run", "--config", "run.cfg", "--seeds", "4,5", "--out", o], dir.path());
        assert!(out.status.success());
    }
    for f in ["run_4.csv", "run_4_steps.csv", "run_5.csv", "run_5_steps.csv", "summary.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between reruns");
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), SMALL);
    let one = Command::new(env!("CARGO_BIN_EXE_sgpts"))
        .args(["run", "--config", "run.cfg", "--seeds", "7", "--out", "one"])
        .current_dir(dir.path())
        .env("SGPTS_THREADS", "1")
        .status()
        .unwrap();
    assert!(one.success());
    assert!(sgpts(&["run", "--config", "run.cfg", "--seeds", "7", "--out", "many"], dir.path()).status.success());
    assert_eq!(
        fs::read(dir.path().join("one/run_7.csv")).unwrap(),
        fs::read(dir.path().join("many/run_7.csv")).unwrap()
    );
}

#[test]
fn missing_objective_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "T = 5\n");
    let out = sgpts(&["run", "--config", "run.cfg", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("objective"));
}

#[test]
fn parse_error_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "objective = bumps1d\n\nB = three\n");
    let out = sgpts(&["run", "--config", "run.cfg", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn override_takes_precedence() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), SMALL);
    let out = sgpts(&["run", "--config", "run.cfg", "--override", "T=2", "--out", "o"], dir.path());
    assert!(out.status.success());
    let run = fs::read_to_string(dir.path().join("o/run_0.csv")).unwrap();
    assert_eq!(run.lines().count(), 1 + 2 * 3);
}

#[test]
fn unknown_verb_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = sgpts(&["frobnicate"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn bound_has_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), SMALL);
    assert!(sgpts(&["run", "--config", "run.cfg", "--seeds", "1", "--out", "o"], dir.path()).status.success());
    let out = sgpts(&["bound", "--config", "run.cfg", "--seeds", "1", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("o/bound_1.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("t,cum_regret,bound"));
    assert_eq!(text.lines().count(), 1 + 6);
}

#[test]
fn bound_without_a_run_log_fails() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), SMALL);
    let out = sgpts(&["bound", "--config", "run.cfg", "--seeds", "9", "--out", "o"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("run_9.csv"));
}

#[test]
fn bench_writes_comparison_table() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), SMALL);
    let out = sgpts(&["bench", "--config", "run.cfg", "--seeds", "1,2", "--out", "o"], dir.path());
    assert!(out.status.success());
    let table = fs::read_to_string(dir.path().join("o/bench.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn verify_quick_passes_and_catches_injected_fault() {
    let dir = tempfile::tempdir().unwrap();
    let ok = sgpts(&["verify", "--level", "quick"], dir.path());
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    let bad = sgpts(&["verify", "--inject-fault", "sigma-clamp"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}

#[test]
fn certify_confirms_stored_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let out = sgpts(&["certify", "--objective", "bumps1d", "--probes", "2000", "--restarts", "20"], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("true"));
}
