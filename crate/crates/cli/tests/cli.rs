use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn psn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psn")).args(args).output().expect("spawn psn")
}

fn out_arg(dir: &Path) -> String {
    dir.to_string_lossy().into_owned()
}

fn small_run(dir: &Path) -> Output {
    psn(&[
        "run",
        "--out",
        &out_arg(dir),
        "--seed",
        "7",
        "--set",
        "experiment.n=50",
        "--set",
        "experiment.trials=20",
    ])
}

#[test]
fn run_is_deterministic_for_a_seed() {
    // Same output dir both times, since the dir itself is echoed in metadata.
    let dir = TempDir::new().unwrap();
    let read = |name: &str| fs::read_to_string(dir.path().join(name)).unwrap();
    assert!(small_run(dir.path()).status.success());
    let first = (read("results.csv"), read("summary.json"));
    assert!(small_run(dir.path()).status.success());
    assert!(first.0 == read("results.csv"), "results.csv differs between identical runs");
    assert!(first.1 == read("summary.json"), "summary.json differs between identical runs");
}

#[test]
fn results_echo_seed_and_overrides() {
    let dir = TempDir::new().unwrap();
    assert!(small_run(dir.path()).status.success());
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(csv.contains("# master_seed: 7"), "{csv}");
    assert!(csv.contains("experiment.n=50"));
    assert!(csv.contains("# seed_mixer: splitmix64"));
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "trial,seed,delivered,delivery_time,hops,t1");
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 21);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["master_seed"], 7);
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(
        &cfg,
        "[experiment]\nn = 40\ntrials = 30\n\n[sweep]\ndelta = [0.1, 0.01, 0.001]\n",
    )
    .unwrap();
    let out = psn(&["sweep", "--config", &out_arg(&cfg), "--out", &out_arg(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 3);
    let deltas: Vec<f64> = rows.iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(deltas, [0.1, 0.01, 0.001]);
}

#[test]
fn generated_trace_replays() {
    let dir = TempDir::new().unwrap();
    let d = out_arg(dir.path());
    let gen = psn(&[
        "gen-trace",
        "--out",
        &d,
        "--set",
        "trace.nodes=20",
        "--set",
        "trace.horizon=200.0",
        "--set",
        "rate_model.delta=0.05",
    ]);
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    let trace = dir.path().join("trace.csv");
    let profiles = dir.path().join("profiles.csv");
    assert!(trace.exists() && profiles.exists());

    let replay = psn(&[
        "replay",
        "--out",
        &d,
        "--set",
        &format!("trace.path={:?}", trace.to_string_lossy()),
        "--set",
        &format!("trace.profiles={:?}", profiles.to_string_lossy()),
        "--set",
        "trace.min_contact=0.0",
        "--set",
        "trace.messages=50",
    ]);
    assert!(replay.status.success(), "{}", String::from_utf8_lossy(&replay.stderr));
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 51);
}

#[test]
fn malformed_config_exits_2_with_line() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[experiment]\nn = = 3\n").unwrap();
    let out = psn(&["run", "--config", &out_arg(&cfg), "--out", &out_arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn unknown_key_exits_2() {
    let dir = TempDir::new().unwrap();
    let out = psn(&["run", "--out", &out_arg(dir.path()), "--set", "experiment.bogus=1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_trace_exits_3() {
    let dir = TempDir::new().unwrap();
    let out = psn(&[
        "replay",
        "--out",
        &out_arg(dir.path()),
        "--set",
        "trace.path=\"/nonexistent/trace.csv\"",
        "--set",
        "trace.profiles=\"/nonexistent/profiles.csv\"",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn validate_single_check_and_unknown_check() {
    let dir = TempDir::new().unwrap();
    let d = out_arg(dir.path());
    let out = psn(&["validate", "--out", &d, "--check", "10"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[PASS]"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report.to_string().contains("forwarding"), "{report}");

    let bad = psn(&["validate", "--out", &d, "--check", "99"]);
    assert_eq!(bad.status.code(), Some(2));
}
