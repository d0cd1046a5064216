use std::path::Path;
use std::process::{Command, Output};

fn ghzcert(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ghzcert"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn bounds_for_mabk_match_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let out = ghzcert(&["bounds", "--family", "mabk", "-n", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("local bound: 2 "), "{text}");
    assert!(text.contains("quantum bound: 4 "), "{text}");
}

#[test]
fn bounds_report_bilocal_value_for_svetlichny() {
    let dir = tempfile::tempdir().unwrap();
    let out = ghzcert(
        &[
            "bounds",
            "--family",
            "svetlichny",
            "-n",
            "5",
            "--out",
            "b.json",
        ],
        dir.path(),
    );
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("b.json")).unwrap()).unwrap();
    assert_eq!(record["bilocal_bound"], 16.0);
    assert_eq!(record["local_bound"], 8.0);
    // The fully local maximum sits below the catalog value, which is reported as a mismatch.
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_passes_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = ghzcert(
        &[
            "verify",
            "--family",
            "svetlichny",
            "-n",
            "3",
            "--out",
            "r.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["min_eigenvalue"].as_f64().unwrap().abs() < 1e-8);
}

#[test]
fn verify_fails_with_inflated_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = ghzcert(
        &[
            "verify", "--family", "mabk", "-n", "3", "--s", "0.47", "--grid", "9", "--format",
            "csv", "--out", "r.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains("min_eigenvalue"));
    assert!(csv.contains("false"));
}

#[test]
fn verify_without_catalog_needs_both_constants() {
    let dir = tempfile::tempdir().unwrap();
    let out = ghzcert(&["verify", "--family", "mabk", "-n", "6"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_is_read_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.cfg"),
        "family = mabk\nn = 5\ngrid = 3\nrefinement = 0\n",
    )
    .unwrap();
    let out = ghzcert(&["verify", "--config", "run.cfg", "-n", "4"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("protocol: mabk-4"), "{text}");
    assert!(text.contains("grid: 3 points per axis"), "{text}");
}

#[test]
fn curve_csv_has_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = ghzcert(
        &["curve", "--family", "mabk", "-n", "5", "--resolution", "5"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "beta_O,relative_violation,fidelity_bound");
    assert_eq!(lines.len(), 6);
    let first: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert!((first[1] - 0.609475).abs() < 1e-5);
    assert!((first[2] - 0.5).abs() < 1e-11);
}

#[test]
fn simulate_is_reproducible_and_logs() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--family",
        "svetlichny",
        "-n",
        "3",
        "--shots",
        "2000",
        "--seed",
        "9",
        "--visibility",
        "0.95",
        "--log",
        "runs.jsonl",
        "--out",
        "rec.json",
    ];
    let first = ghzcert(&args, dir.path());
    let second = ghzcert(&args, dir.path());
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(stdout(&first), stdout(&second));
    let log = std::fs::read_to_string(dir.path().join("runs.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    let rec: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(rec["rng"], "chacha20");
    assert_eq!(rec["seed"], 9);
}

#[test]
fn crosscheck_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = ghzcert(&["crosscheck", "-n", "4", "--samples", "50"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("result: PASS"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        ghzcert(&["verify", "--grid", "1"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ghzcert(&["simulate", "--visibility", "1.5"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ghzcert(&["bounds", "-n", "2"], dir.path()).status.code(),
        Some(2)
    );
}
