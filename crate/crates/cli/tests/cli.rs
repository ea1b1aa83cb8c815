use std::path::Path;
use std::process::{Command, Output};

fn pamdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pamdp")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.json");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const CHAIN: &str = r#"{"env":{"kind":"chain"},"agent":{"kind":"oracle"},"scenario":"two_phase",
    "phase1":{"alpha":0.4,"beta":0.2},"phase2":{"known_model":true},"episodes":2048}"#;

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"env":{"kind":"lineworld"},"agent":{"kind":"qlearning"},"scenario":"baseline","episodes":100}"#,
    );
    let out = dir.path().join("out");
    let o = pamdp(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--plot", "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("baseline_seed0.csv")).unwrap();
    assert!(csv.starts_with("episode,phase,agent_return,principal_return,welfare,terminal_pollution,seed\n"));
    assert_eq!(csv.lines().count(), 101);
    assert!(out.join("summary.json").exists());
    assert!(out.join("pollution.svg").exists());
    assert!(o.stdout.is_empty());
}

#[test]
fn missing_config_is_a_config_error() {
    let o = pamdp(&["run", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/cfg.json"));
}

#[test]
fn bad_field_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"env":{"kind":"lineworld","horizon":-3},"agent":{"kind":"oracle"}}"#);
    let o = pamdp(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("env.horizon"));
}

#[test]
fn small_sweep_reports_minimum_total() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CHAIN);
    let o = pamdp(&["regret-sweep", "--config", &cfg, "--t-grid", "64,128"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("minimum T is"));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CHAIN);
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let o = pamdp(&["run", "--config", &cfg, "--out", blocker.join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn unknown_subcommand_prints_usage() {
    let o = pamdp(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn estimate_transfers_reports_implementability() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CHAIN);
    let out = dir.path().join("est");
    let o = pamdp(&["estimate-transfers", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"]);
    assert!(o.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("phase1_report.json")).unwrap()).unwrap();
    assert_eq!(report["implementable"], true);
    let tau: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("tau_hat.json")).unwrap()).unwrap();
    assert_eq!(tau["tau"].as_array().unwrap().len(), 2);
}

#[test]
fn diffusion_check_passes_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = pamdp(&["diffusion-check", "--samples", "20000", "--point", "0.3,0.8,0.6", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("diffusion.json")).unwrap()).unwrap();
    assert_eq!(report.as_array().unwrap().len(), 6);
}
