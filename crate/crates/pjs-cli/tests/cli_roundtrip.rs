//! End-to-end CLI checks: synth -> track -> eval, config handling, and the
//! failure exits.

use std::path::Path;
use std::process::{Command, Output};

fn pjs() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pjs"))
}

fn assert_success(output: &Output) {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn write_small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, r#"{"n_particles": 40, "n_targets": 3, "seed": 0}"#).unwrap();
    path
}

#[test]
fn synth_track_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    let runs = dir.path().join("runs");

    let output = pjs()
        .args(["synth", "--kind", "static", "--frames", "6"])
        .arg("--out")
        .arg(&seq)
        .output()
        .unwrap();
    assert_success(&output);

    let config = write_small_config(dir.path());
    let output = pjs()
        .arg("track")
        .arg("--seq")
        .arg(&seq)
        .arg("--out")
        .arg(&runs)
        .arg("--config")
        .arg(&config)
        .args(["--seeds", "0..1", "--dump-dict"])
        .output()
        .unwrap();
    assert_success(&output);
    assert!(runs.join("seq/seed00.csv").exists());
    assert!(runs.join("seq/seed01.csv").exists());
    // Dictionary snapshots: M N header then M rows.
    let snapshot = std::fs::read_to_string(runs.join("seq/seed00.dict/frame0003.txt")).unwrap();
    assert!(snapshot.starts_with("64 "));
    assert_eq!(snapshot.lines().count(), 65);

    let output = pjs()
        .arg("eval")
        .arg("--runs")
        .arg(runs.join("seq"))
        .arg("--seq")
        .arg(&seq)
        .output()
        .unwrap();
    assert_success(&output);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("sr@0.60"), "{stdout}");
    assert!(stdout.contains("runs: 2"), "{stdout}");
    for artifact in [
        "report.csv",
        "success_curve.csv",
        "cle.svg",
        "overlap.svg",
        "success.svg",
    ] {
        assert!(runs.join("seq").join(artifact).exists(), "{artifact}");
    }
}

#[test]
fn ten_seed_protocol_writes_ten_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    let runs = dir.path().join("runs");
    pjs()
        .args(["synth", "--kind", "static", "--frames", "4"])
        .arg("--out")
        .arg(&seq)
        .output()
        .unwrap();
    let config = write_small_config(dir.path());
    let output = pjs()
        .arg("track")
        .arg("--seq")
        .arg(&seq)
        .arg("--out")
        .arg(&runs)
        .arg("--config")
        .arg(&config)
        .args(["--seeds", "0..9"])
        .output()
        .unwrap();
    assert_success(&output);
    let csvs = std::fs::read_dir(runs.join("seq"))
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .ends_with(".csv")
        })
        .count();
    assert_eq!(csvs, 10);
}

#[test]
fn effective_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    let runs = dir.path().join("runs");
    pjs()
        .args(["synth", "--kind", "static", "--frames", "3"])
        .arg("--out")
        .arg(&seq)
        .output()
        .unwrap();
    let config = write_small_config(dir.path());
    let output = pjs()
        .arg("track")
        .arg("--seq")
        .arg(&seq)
        .arg("--out")
        .arg(&runs)
        .arg("--config")
        .arg(&config)
        .args(["--seeds", "0", "--solver", "pjs-m"])
        .output()
        .unwrap();
    assert_success(&output);

    // Dumped effective config equals parsed input plus defaults plus the
    // flag override.
    let effective = std::fs::read_to_string(runs.join("config.json")).unwrap();
    let parsed = pjs::TrackerConfig::from_json(&effective).unwrap();
    let expected = pjs::TrackerConfig {
        n_particles: 40,
        n_targets: 3,
        solver: pjs::SolverKind::PjsM,
        ..pjs::TrackerConfig::default()
    };
    assert_eq!(parsed, expected);
}

#[test]
fn unknown_config_key_is_a_usage_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    pjs()
        .args(["synth", "--kind", "static", "--frames", "3"])
        .arg("--out")
        .arg(&seq)
        .output()
        .unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"particels": 99}"#).unwrap();
    let output = pjs()
        .arg("track")
        .arg("--seq")
        .arg(&seq)
        .arg("--out")
        .arg(dir.path().join("runs"))
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("particels"), "{stderr}");
}

#[test]
fn empty_seed_list_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    pjs()
        .args(["synth", "--kind", "static", "--frames", "3"])
        .arg("--out")
        .arg(&seq)
        .output()
        .unwrap();
    let output = pjs()
        .arg("track")
        .arg("--seq")
        .arg(&seq)
        .arg("--out")
        .arg(dir.path().join("runs"))
        .args(["--seeds", ""])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("empty seed list"), "{stderr}");
}

#[test]
fn unknown_synth_kind_fails() {
    let dir = tempfile::tempdir().unwrap();
    let output = pjs()
        .args(["synth", "--kind", "wobble"])
        .arg("--out")
        .arg(dir.path().join("seq"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("wobble"));
}

#[test]
fn eval_without_runs_fails() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    pjs()
        .args(["synth", "--kind", "static", "--frames", "3"])
        .arg("--out")
        .arg(&seq)
        .output()
        .unwrap();
    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let output = pjs()
        .arg("eval")
        .arg("--runs")
        .arg(&empty)
        .arg("--seq")
        .arg(&seq)
        .output()
        .unwrap();
    assert!(!output.status.success());
}

#[test]
fn failed_run_writes_error_file_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    pjs()
        .args(["synth", "--kind", "static", "--frames", "3"])
        .arg("--out")
        .arg(&seq)
        .output()
        .unwrap();
    // A degenerate first box (vanishing width) makes the initial warp
    // invalid, failing the run itself rather than the load.
    std::fs::write(
        seq.join("groundtruth_rect.txt"),
        "5,5,0.00000001,10\n5,5,0.00000001,10\n5,5,0.00000001,10\n",
    )
    .unwrap();
    let config = write_small_config(dir.path());
    let runs = dir.path().join("runs");
    let output = pjs()
        .arg("track")
        .arg("--seq")
        .arg(&seq)
        .arg("--out")
        .arg(&runs)
        .arg("--config")
        .arg(&config)
        .args(["--seeds", "0..1"])
        .output()
        .unwrap();
    // Per-run failures do not abort the command.
    assert_success(&output);
    assert!(runs.join("seq/seed00.error.txt").exists());
    assert!(runs.join("seq/seed01.error.txt").exists());
    assert!(!runs.join("seq/seed00.csv").exists());
}

#[test]
fn pjs_threads_env_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    pjs()
        .args(["synth", "--kind", "translate", "--frames", "4"])
        .arg("--out")
        .arg(&seq)
        .output()
        .unwrap();
    let config = write_small_config(dir.path());
    let mut csvs = Vec::new();
    for threads in ["1", "3"] {
        let runs = dir.path().join(format!("runs{threads}"));
        let output = pjs()
            .arg("track")
            .arg("--seq")
            .arg(&seq)
            .arg("--out")
            .arg(&runs)
            .arg("--config")
            .arg(&config)
            .args(["--seeds", "0"])
            .env("PJS_THREADS", threads)
            .output()
            .unwrap();
        assert_success(&output);
        csvs.push(std::fs::read(runs.join("seq/seed00.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}
