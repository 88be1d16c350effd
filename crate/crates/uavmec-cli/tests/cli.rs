//! End-to-end checks against the built binary.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uavmec"))
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("missing {name}: {e}"))
}

/// Small mission so alternating runs stay fast under test.
const TINY: &str = "\
num_slots = 6
horizon_s = 1.2
uav_start_m = [-4.0, -3.0]
uav_end_m = [4.0, -3.0]

[[ues]]
position_m = [0.0, 4.0]
task_mbits = 40
";

#[test]
fn single_scheme_run_is_deterministic_and_complete() {
    let root = tempfile::tempdir().unwrap();
    let a = root.path().join("a");
    let b = root.path().join("b");
    for dir in [&a, &b] {
        let status = bin()
            .args(["--scheme", "local", "--quiet", "--out"])
            .arg(dir)
            .status()
            .unwrap();
        assert!(status.success(), "local run failed: {status:?}");
    }

    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "bandwidth.csv",
            "convergence.csv",
            "schedule.csv",
            "trajectory.csv",
            "trajectory.svg",
        ]
    );
    for name in &names {
        assert_eq!(read(&a, name), read(&b, name), "{name} differs between runs");
    }
}

#[test]
fn sweep_with_every_scheme_writes_the_summary_table() {
    let root = tempfile::tempdir().unwrap();
    let scenario = root.path().join("tiny.toml");
    fs::write(&scenario, TINY).unwrap();
    let out = root.path().join("out");

    let status = bin()
        .env("UAVMEC_THREADS", "2")
        .args(["--scheme", "all", "--sweep", "O=0.2..0.8:0.6", "--quiet"])
        .arg("--scenario")
        .arg(&scenario)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success(), "sweep failed: {status:?}");

    let summary = read(&out, "summary.csv");
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "# uavmec summary v1");
    assert_eq!(lines[1], "param,value,scheme,wsec_j,outer_passes,converged");
    assert_eq!(lines.len(), 2 + 2 * 5, "two grid points, five schemes");
    assert!(lines[2].starts_with("O,0.2,proposed,"));
    assert!(lines[7].starts_with("O,0.8,proposed,"));
    assert!(!out.join("schedule.csv").exists(), "sweeps emit only the summary");
}

#[test]
fn embedded_sweep_block_drives_the_run() {
    let root = tempfile::tempdir().unwrap();
    let scenario = root.path().join("tiny.toml");
    fs::write(
        &scenario,
        format!("{TINY}\n[sweep]\nparameter = \"w_U\"\ngrid = [0.2, 0.4]\n"),
    )
    .unwrap();
    let out = root.path().join("out");

    let status = bin()
        .args(["--scheme", "local", "--quiet"])
        .arg("--scenario")
        .arg(&scenario)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success(), "embedded sweep failed: {status:?}");
    let summary = read(&out, "summary.csv");
    assert_eq!(summary.lines().count(), 2 + 2);
    assert!(summary.contains("w_U,0.2,local,"));
    assert!(summary.contains("w_U,0.4,local,"));
}

#[test]
fn bad_inputs_exit_with_code_one() {
    let root = tempfile::tempdir().unwrap();
    for extra in [
        vec!["--scheme", "warp-drive"],
        vec!["--sweep", "I=5..1"],
        vec!["--scenario", "/nonexistent/mission.toml"],
        vec!["--tol", "-1"],
        vec!["--max-outer", "0"],
    ] {
        let out = bin()
            .args(["--quiet", "--out"])
            .arg(root.path().join("x"))
            .args(&extra)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(1), "args {extra:?}: {out:?}");
    }
}

#[test]
fn hitting_the_pass_cap_exits_with_code_two() {
    let root = tempfile::tempdir().unwrap();
    let scenario = root.path().join("tiny.toml");
    fs::write(&scenario, TINY).unwrap();
    let out = bin()
        .args([
            "--scheme",
            "proposed",
            "--max-outer",
            "2",
            "--tol",
            "1e-300",
            "--quiet",
        ])
        .arg("--scenario")
        .arg(&scenario)
        .arg("--out")
        .arg(root.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}
