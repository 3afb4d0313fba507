use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_blender-lab"))
}

fn scratch_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("blender-lab-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

#[test]
fn chart_suite_writes_a_passing_report() {
    let dir = scratch_dir("chart");
    let out = run(&["verify", "chart", "--out", dir.to_str().unwrap(), "--csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = std::fs::read_to_string(dir.join("report.json")).unwrap();
    let rep: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(rep["schema"], "contact-blender-report/1");
    assert_eq!(rep["verdict"], "pass");
    assert!(dir.join("timing.json").exists());
    assert!(std::fs::read_to_string(dir.join("summary.csv")).unwrap().starts_with("r,m_r,"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("== overall pass"));
}

#[test]
fn json_flag_prints_the_report() {
    let dir = scratch_dir("json");
    let out = run(&["verify", "embeddings", "--json", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["suites"][0]["suite"], "embeddings");
}

#[test]
fn usage_and_config_errors_exit_with_three() {
    assert_eq!(run(&["verify", "nope"]).status.code(), Some(3));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(3));
    assert_eq!(run(&["verify", "chart", "--r", "0.5"]).status.code(), Some(3));

    let dir = scratch_dir("badcfg");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "[chart]\nL = -0.5\n").unwrap();
    let out = run(&["verify", "chart", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("chart.L"));
}

#[test]
fn help_and_version_exit_cleanly() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn default_config_round_trips_through_a_file() {
    let out = run(&["default-config"]);
    assert_eq!(out.status.code(), Some(0));
    let dir = scratch_dir("defcfg");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("cfg.toml");
    std::fs::write(&cfg, &out.stdout).unwrap();
    let out = run(&["verify", "flows", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn suite_without_applicable_r_is_inconclusive() {
    let dir = scratch_dir("holo");
    let out = run(&["verify", "holonomy", "--r", "0.1", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
