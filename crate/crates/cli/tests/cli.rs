use std::path::PathBuf;
use std::process::{Command, Output};

use ris_iterative::harness::ScenarioConfig;

fn ris_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ris-sim")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ris-sim-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

const SMALL: [&str; 10] = ["--set", "k=2", "--set", "n=4", "--set", "j=64", "--set", "j_prime=4", "--set", "ao_rounds=2"];

#[test]
fn default_config_parses_back() {
    let out = ris_sim(&["default-config"]);
    assert!(out.status.success());
    let cfg = ScenarioConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, ScenarioConfig::default());
}

#[test]
fn optimize_writes_design_and_trace() {
    let dir = scratch("optimize");
    let mut args = vec!["optimize", "--seed", "5", "--out", dir.to_str().unwrap()];
    args.extend(SMALL);
    let out = ris_sim(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let design: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("design.json")).unwrap()).unwrap();
    assert_eq!(design["seed"], 5);
    assert_eq!(design["theta"].as_array().unwrap().len(), 4);
    let rounds = std::fs::read_to_string(dir.join("rounds.csv")).unwrap();
    assert!(rounds.starts_with("round,power_w,power_dbm\n"));
    assert!(rounds.lines().count() >= 2);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn se_trace_from_a_config_file() {
    let dir = scratch("se");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = ScenarioConfig { k: 2, n: 4, j: 64, j_prime: 4, ao_rounds: 2, t_max: 3, ..ScenarioConfig::default() };
    let path = dir.join("scenario.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    let out = ris_sim(&["se-trace", "--config", path.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("se_trace.csv")).unwrap();
    assert!(csv.starts_with("t,v1,v2,rho1,rho2\n"));
    assert_eq!(csv.lines().count(), 1 + 4);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bad_overrides_fail_cleanly() {
    for bad in ["j_prime=3", "nonsense=1", "k"] {
        let out = ris_sim(&["optimize", "--set", bad]);
        assert!(!out.status.success(), "{bad}");
        assert!(!out.stderr.is_empty());
    }
}
