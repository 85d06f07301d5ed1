use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn climbsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_climbsim")).args(args).output().expect("spawn climbsim")
}

fn short_scenario(dir: &Path, dt: f64, extra: &str) -> String {
    let text = format!(
        r#"name = "short"
duration = 4.0
dt = {dt}

[gravity]
magnitude = 1.635

[controller]
mode = "baseline"

[controller.admittance]
mass = 1.0
damping = 5e3
stiffness = 5e4

[gait]
duty_factor = 0.8
swings = 1
{extra}"#
    );
    let path = dir.join("short.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn presets_lists_shipped_cases() {
    let out = climbsim(&["presets"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["case1_earth", "case1_lunar", "case2_micro"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn run_writes_csv_summary_and_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = short_scenario(tmp.path(), 1e-3, "");
    let out_dir = tmp.path().join("out");
    let out = climbsim(&["run", &scenario, "--mode", "admittance", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["log.csv", "summary.txt", "max_force.svg", "max_torque.svg", "stability.svg", "base_trajectory.svg"] {
        assert!(out_dir.join(file).is_file(), "{file} missing");
    }
    let csv = fs::read_to_string(out_dir.join("log.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4001);
    assert!(csv.starts_with("t,fx_0,fy_0,fz_0,"));
    let summary = fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("mode = base_admittance"));
    assert!(summary.contains("completed = true"));
}

#[test]
fn dt_override_changes_the_sample_count() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = short_scenario(tmp.path(), 1e-3, "");
    let out_dir = tmp.path().join("out");
    let out = climbsim(&["run", &scenario, "--dt", "0.0005", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("log.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8001);
}

#[test]
fn validation_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_key = short_scenario(tmp.path(), 1e-3, "stance_height = 0.1\n");
    let out = climbsim(&["run", &bad_key]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stance_height"));

    let out = climbsim(&["run", "case2_micro", "--dt=-0.001"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dt"));

    let out = climbsim(&["run", "/no/such/scenario.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_with_three_and_keeps_partial_log() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = short_scenario(tmp.path(), 0.05, "");
    let out_dir = tmp.path().join("out");
    let out = climbsim(&["run", &scenario, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("divergence"));
    assert!(out_dir.join("log.csv").is_file());
}

#[test]
fn compare_reports_both_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = short_scenario(tmp.path(), 1e-3, "");
    let out_dir = tmp.path().join("cmp");
    let out = climbsim(&["compare", &scenario, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(out_dir.join("comparison.txt")).unwrap();
    assert!(report.contains("baseline.mode = baseline"));
    assert!(report.contains("proposed.mode = base_admittance"));
    assert!(report.contains("proposed_cot_lower = "));
    assert!(out_dir.join("baseline/log.csv").is_file());
    assert!(out_dir.join("admittance/log.csv").is_file());
}
