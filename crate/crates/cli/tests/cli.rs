use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use cdt_router_cli::{apply_overrides, parse_config, parse_str, run, Overrides};
use serde_json::Value;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn example_configs() -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
}

fn with_output(path: &Path, dir: &Path) -> cdt_router_cli::RunConfig {
    let config = parse_config(path).unwrap();
    apply_overrides(
        config,
        &Overrides {
            out: Some(dir.to_path_buf()),
            ..Overrides::default()
        },
    )
    .unwrap()
}

fn binary() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cdt-router"));
    for var in ["CONFIG", "OUT", "SEED", "WORKERS", "DT_MAX"] {
        cmd.env_remove(format!("CDT_ROUTER_{var}"));
    }
    cmd
}

#[test]
fn every_example_config_runs_within_budget() {
    let configs = example_configs();
    assert!(configs.len() >= 7);
    for path in configs {
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let outcome = run(&with_output(&path, dir.path())).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(start.elapsed() < Duration::from_secs(120), "{} too slow", path.display());
        for name in &outcome.manifest.outputs {
            assert!(dir.path().join(name).is_file(), "{name} missing");
        }
    }
}

#[test]
fn route_writes_trajectory_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run(&with_output(&configs_dir().join("route.json"), dir.path())).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t[1/J],site,population,concurrence");
    // 14 basis states per sample.
    assert_eq!((csv.lines().count() - 1) % 14, 0);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary, outcome.summary);
    let c_bob = summary["c_bob"].as_f64().unwrap();
    let c_charlie = summary["c_charlie"].as_f64().unwrap();
    assert!(c_bob > 0.95 && c_charlie < 0.1, "{c_bob} {c_charlie}");
}

#[test]
fn reruns_give_identical_csvs() {
    for name in ["route.json", "ensemble.json"] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let path = configs_dir().join(name);
        let first = run(&with_output(&path, a.path())).unwrap();
        let mut second_config = with_output(&path, b.path());
        second_config.workers = Some(3);
        let second = run(&second_config).unwrap();
        assert_eq!(first.manifest.config_sha256.len(), 64);
        for file in first.manifest.outputs.iter().filter(|f| f.ends_with(".csv")) {
            let x = std::fs::read(a.path().join(file)).unwrap();
            let y = std::fs::read(b.path().join(file)).unwrap();
            assert!(x == y, "{name}/{file} differs between runs");
        }
        assert_eq!(first.manifest.outputs, second.manifest.outputs);
    }
}

#[test]
fn optimize_reports_ratio_and_period() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run(&with_output(&configs_dir().join("optimize.json"), dir.path())).unwrap();
    let ratio = outcome.summary["ratio"].as_f64().unwrap();
    let period = outcome.summary["period"].as_f64().unwrap();
    assert!((ratio - 0.5902).abs() < 1e-3);
    let factor = cdt_router::experiments::period_factor(ratio);
    assert!((period - factor * std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn manifest_hash_tracks_content() {
    let base = parse_config(&configs_dir().join("route.json")).unwrap();
    let reformatted = std::fs::read_to_string(configs_dir().join("route.json"))
        .unwrap()
        .replace('\n', " ")
        .replace("  ", " ");
    assert_eq!(parse_str(&reformatted).unwrap().content_hash(), base.content_hash());
    let mut changed = base.clone();
    changed.protocol.as_mut().unwrap().omega = 10.000001;
    assert_ne!(changed.content_hash(), base.content_hash());
}

#[test]
fn seed_flag_overrides_error_model_seed() {
    let config = parse_config(&configs_dir().join("ensemble.json")).unwrap();
    let overridden = apply_overrides(
        config.clone(),
        &Overrides {
            seed: Some(7),
            ..Overrides::default()
        },
    )
    .unwrap();
    assert_eq!(overridden.errors.as_ref().unwrap().seed, 7);
    assert_ne!(overridden.content_hash(), config.content_hash());
}

#[test]
fn binary_exit_codes_and_error_json() {
    let dir = tempfile::tempdir().unwrap();

    let ok = binary()
        .args(["--config", configs_dir().join("optimize.json").to_str().unwrap()])
        .env("CDT_ROUTER_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let summary: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert!((summary["ratio"].as_f64().unwrap() - 0.5902).abs() < 1e-3);
    assert!(dir.path().join("manifest.json").is_file());

    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"kind": "route", "chain": {"n_sites": 5, "base_splitting": 1, "lambda1": 2, "lambda2": 2}, "protocol": {"omega": 10}}"#,
    )
    .unwrap();
    let out = binary().args(["--config", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "config");
    assert!(err["diagnostics"][0]["message"].as_str().unwrap().contains("degenerate ratchet"));

    std::fs::write(&bad, r#"{"kind": "optimize", "colour": 1}"#).unwrap();
    let out = binary().args(["--config", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = binary()
        .args(["--config", configs_dir().join("route.json").to_str().unwrap(), "--dt-max", "1.0"])
        .env("CDT_ROUTER_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["diagnostics"][0]["path"], "dt_max");
}

#[test]
fn numerical_failure_exits_with_three() {
    // Stages far too short to move the signal: Bob's end stays empty.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("nosignal.json");
    std::fs::write(
        &cfg,
        r#"{"kind": "transfer",
            "chain": {"n_sites": 41, "base_splitting": 1, "lambda1": 3, "lambda2": 1.5},
            "protocol": {"omega": 10, "stage_durations": [0.01, 0.01], "n_cycles": 1}}"#,
    )
    .unwrap();
    let out = binary()
        .args(["--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "numerical");
    assert!(err["detail"].as_str().unwrap().contains("NoSignal"));
}
