use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn proofloop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proofloop"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn mock_run(out: &Path, script: &str, id: &str, extra: &[&str]) -> Output {
    let problem = fixture("problem.md");
    let script = fixture(script);
    let config = fixture("fast.toml");
    let mut args = vec![
        "run",
        "--problem",
        problem.to_str().unwrap(),
        "--backend",
        "mock",
        "--mock-script",
        script.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--run-id",
        id,
    ];
    args.extend_from_slice(extra);
    proofloop(&args)
}

#[test]
fn mock_run_accepts_and_writes_the_solution() {
    let dir = tempfile::tempdir().unwrap();
    let o = mock_run(dir.path(), "mock/accept.toml", "demo", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("demo: Accepted after 5 verifications"));
    let solution = std::fs::read_to_string(dir.path().join("demo.solution.md")).unwrap();
    assert!(solution.starts_with("We have $x^2 - 4"));

    let report = proofloop(&["report", "--run-id", "demo", "--out", dir.path().to_str().unwrap()]);
    let text = stdout(&report);
    assert!(report.status.success());
    assert!(text.contains("outcome: Accepted after 5 verifications"));
    assert_eq!(text.matches("   report: Pass").count(), 5);
    assert!(text.contains("latest draft (v1, SelfImprovement)"));
}

#[test]
fn rejected_run_exits_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = mock_run(dir.path(), "mock/reject.toml", "bad", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("bad: Rejected after 10 verifications"));
    assert!(!dir.path().join("bad.solution.md").exists());
}

#[test]
fn several_runs_get_numbered_ids() {
    let dir = tempfile::tempdir().unwrap();
    let o = mock_run(dir.path(), "mock/accept.toml", "many", &["--runs", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for i in 0..3 {
        assert!(text.contains(&format!("many-00{i}: Accepted")), "{text}");
    }
    assert!(dir.path().join("many-000.solution.md").exists());
}

#[test]
fn interrupted_run_resumes_from_its_log() {
    let dir = tempfile::tempdir().unwrap();
    mock_run(dir.path(), "mock/accept.toml", "cut", &[]);
    let log = dir.path().join("cut.jsonl");
    let text = std::fs::read_to_string(&log).unwrap();
    let keep: Vec<&str> = text.lines().take(12).collect();
    std::fs::write(&log, keep.join("\n") + "\n{\"run_id\":\"cut\",\"se").unwrap();
    let script = fixture("mock/accept.toml");
    let o = proofloop(&[
        "resume",
        "--run-id",
        "cut",
        "--backend",
        "mock",
        "--mock-script",
        script.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("cut: Accepted after 5 verifications"));
}

#[test]
fn reliability_table_in_both_formats() {
    let csv = proofloop(&[
        "reliability", "--p-miss", "0.5", "--p-false-alarm", "0.1", "--trials", "20000", "--seed", "7", "--format", "csv",
    ]);
    assert!(csv.status.success());
    let text = stdout(&csv);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], proofloop_cli::CSV_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("flawed,0.5,0.1,5,10,30,20000,7,"));
    assert!(lines[1].ends_with(",0.03125"));
    assert!(lines[2].starts_with("sound,"));
    assert!(String::from_utf8_lossy(&csv.stderr).contains("note:"));

    let plain = proofloop(&["reliability", "--p-miss", "0.2", "--p-false-alarm", "0", "--trials", "1000"]);
    let text = stdout(&plain);
    assert!(text.contains("note: Only verification outcomes are simulated"));
    assert!(text.contains("sound      1.000000   0.000000   0.000000      5.000"));

    // The verifier error rates have no default.
    let missing = proofloop(&["reliability", "--p-miss", "0.2"]);
    assert_eq!(missing.status.code(), Some(2));
    let bad = proofloop(&["reliability", "--p-miss", "1.5", "--p-false-alarm", "0"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn configuration_and_input_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "pass_treshold = 3\n").unwrap();
    let problem = fixture("problem.md");
    let o = proofloop(&[
        "run",
        "--problem",
        problem.to_str().unwrap(),
        "--backend",
        "mock",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pass_treshold"));

    let o = proofloop(&["run", "--problem", problem.to_str().unwrap(), "--backend", "mock", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--mock-script"));

    let o = proofloop(&["report", "--run-id", "nothing", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
