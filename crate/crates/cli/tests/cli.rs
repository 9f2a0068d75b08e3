//! End-to-end tests of the binary: artifact layout, summary output and
//! exit codes.

use std::path::Path;
use std::process::Command;

fn write_toy_scenario(dir: &Path) -> std::path::PathBuf {
    std::fs::write(
        dir.join("loss.csv"),
        "f_thz,loss_db_km\n150.0,0.2\n250.0,0.2\n",
    )
    .unwrap();
    std::fs::write(
        dir.join("raman.csv"),
        "f_ref_thz=206.5\ndf_thz,cr_per_w_km\n0,0\n13.2,0.39\n30,0\n",
    )
    .unwrap();
    let scenario = r#"
[link]
n_spans = 2

[[band]]
name = "C"
f_low_thz = 190.75
f_high_thz = 196.60
n_channels = 4
spacing_ghz = 118.75
dfa_nf_db = 5.0
symbol_rate_gbaud = 100.0
roll_off = 0.1

[[spectrum]]
band = "C"
a0 = 0.0

[[pump]]
f_thz = 206.5
p_dbm = 20.0

[[span]]
length_km = 50.0
dz_km = 0.5
loss_file = "loss.csv"
raman_file = "raman.csv"
lumped_loss_db = 4.0

[optimizer]
w = 0.0
budget = 60
seed = 7
"#;
    let path = dir.join("scenario.toml");
    std::fs::write(&path, scenario).unwrap();
    path
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_raman-spp"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn solve_spp_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_toy_scenario(dir.path());
    let out = dir.path().join("out");
    let result = run(&[
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--command",
        "solve-spp",
    ]);
    assert!(result.status.success(), "stderr: {}", String::from_utf8_lossy(&result.stderr));
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("converged            = true"), "stdout: {stdout}");
    assert!(out.join("spp/span00_mw.csv").exists());
    assert!(out.join("spp/span00_dbm.csv").exists());
    assert!(out.join("report.txt").exists());
    // 5 lightwaves, M = 100 -> header + 101 rows, 1 + 5 columns
    let text = std::fs::read_to_string(out.join("spp/span00_mw.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 102);
    assert_eq!(lines[0].split(',').count(), 6);
}

#[test]
fn assess_writes_results_and_timing() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_toy_scenario(dir.path());
    let out = dir.path().join("out");
    let result = run(&[
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--command",
        "assess",
    ]);
    assert!(result.status.success(), "stderr: {}", String::from_utf8_lossy(&result.stderr));
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("[timing]"));
    assert!(stdout.contains("channels             = 4"));
    let results = std::fs::read_to_string(out.join("results/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 5); // header + 4 channels
    assert!(out.join("noise/noise.csv").exists());
}

#[test]
fn assess_no_drb_zeroes_drb_column() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_toy_scenario(dir.path());
    let out = dir.path().join("out");
    let result = run(&[
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--command",
        "assess",
        "--no-drb",
    ]);
    assert!(result.status.success());
    let noise = std::fs::read_to_string(out.join("noise/noise.csv")).unwrap();
    for line in noise.lines().skip(1) {
        let drb: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert_eq!(drb, 0.0);
    }
}

#[test]
fn optimize_emits_history_and_reusable_params() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_toy_scenario(dir.path());
    let out = dir.path().join("out");
    let result = run(&[
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--command",
        "optimize",
    ]);
    assert!(result.status.success(), "stderr: {}", String::from_utf8_lossy(&result.stderr));
    let history = std::fs::read_to_string(out.join("history/history.csv")).unwrap();
    assert!(history.lines().count() > 10);
    // best-so-far column is monotone non-decreasing
    let best: Vec<f64> = history
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(best.windows(2).all(|w| w[1] >= w[0]));
    let fragment = std::fs::read_to_string(out.join("results/best_params.toml")).unwrap();
    assert!(fragment.contains("[[spectrum]]"));
    assert!(fragment.contains("[[pump]]"));
}

#[test]
fn compare_oracle_reports_delta() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_toy_scenario(dir.path());
    let out = dir.path().join("out");
    let result = run(&[
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--command",
        "compare-oracle",
    ]);
    assert!(result.status.success(), "stderr: {}", String::from_utf8_lossy(&result.stderr));
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("max_delta_db"));
    assert!(out.join("spp/unidir_mw.csv").exists());
    assert!(out.join("spp/reference_mw.csv").exists());
}

#[test]
fn exit_codes() {
    // usage error (unknown command value) -> 2
    let result = run(&["--scenario", "x.toml", "--out", "o", "--command", "bogus"]);
    assert_eq!(result.status.code(), Some(2));
    // domain error (missing scenario file) -> 1
    let dir = tempfile::tempdir().unwrap();
    let result = run(&[
        "--scenario",
        dir.path().join("missing.toml").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--command",
        "assess",
    ]);
    assert_eq!(result.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("error"), "stderr: {stderr}");
}
