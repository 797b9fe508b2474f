use std::path::{Path, PathBuf};

use v0lver_core::cli::{main_with, EXIT_CONFIG, EXIT_OK};
use v0lver_core::sim::{LvrReport, ScenarioConfig};

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Out {
    let mut argv = vec!["v0lver-sim"];
    argv.extend_from_slice(args);
    let (mut so, mut se) = (Vec::new(), Vec::new());
    let code = main_with(argv, &mut so, &mut se);
    Out {
        code,
        stdout: String::from_utf8(so).unwrap(),
        stderr: String::from_utf8(se).unwrap(),
    }
}

fn reference() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/reference.toml")
}

fn small_scenario(dir: &Path) -> String {
    let mut cfg = ScenarioConfig {
        runs: 6,
        horizon: 60,
        ..Default::default()
    };
    cfg.dominance.trials = 50;
    let p = dir.join("small.toml");
    std::fs::write(&p, cfg.to_toml_string()).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn reference_scenario_is_the_default() {
    let text = std::fs::read_to_string(reference()).unwrap();
    assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), ScenarioConfig::default());
    let out = cli(&["--scenario", reference().to_str().unwrap(), "validate"]);
    assert_eq!(out.code, EXIT_OK);
    assert!(text.ends_with(&out.stdout));
}

#[test]
fn validate_echoes_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("min.toml");
    std::fs::write(&p, "version = 1\nseed = 9\n").unwrap();
    let out = cli(&["--scenario", p.to_str().unwrap(), "validate"]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let echoed = ScenarioConfig::from_toml_str(&out.stdout).unwrap();
    assert_eq!(echoed.seed, 9);
    assert_eq!(echoed.horizon, ScenarioConfig::default().horizon);
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(cli(&["frobnicate"]).code, EXIT_CONFIG);
    assert_eq!(cli(&[]).code, EXIT_CONFIG);
    assert_eq!(cli(&["--scenario", "/nonexistent/s.toml", "validate"]).code, EXIT_CONFIG);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "version = 1\nhorizon = 0\n").unwrap();
    let out = cli(&["--scenario", bad.to_str().unwrap(), "validate"]);
    assert_eq!(out.code, EXIT_CONFIG);
    assert!(out.stderr.contains("horizon"), "{}", out.stderr);
    std::fs::write(&bad, "seed = 1\n").unwrap();
    assert_eq!(cli(&["--scenario", bad.to_str().unwrap(), "validate"]).code, EXIT_CONFIG);
}

#[test]
fn help_exits_zero() {
    let out = cli(&["--help"]);
    assert_eq!(out.code, EXIT_OK);
    assert!(out.stdout.contains("equilibrium"));
}

#[test]
fn run_writes_outputs_and_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let scen = small_scenario(dir.path());
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    let first = cli(&["--scenario", &scen, "--out", o, "--seed", "42", "run", "--events"]);
    assert_eq!(first.code, EXIT_OK, "{}", first.stderr);
    for f in ["summary.json", "blocks.csv", "events.ndjson"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary = std::fs::read(out.join("summary.json")).unwrap();

    let again = cli(&["--scenario", &scen, "--out", o, "--seed", "42", "run"]);
    assert_eq!(again.code, EXIT_CONFIG);
    assert!(again.stderr.contains("--force"));

    let forced = cli(&["--scenario", &scen, "--out", o, "--seed", "42", "--force", "run", "--events"]);
    assert_eq!(forced.code, EXIT_OK);
    assert_eq!(std::fs::read(out.join("summary.json")).unwrap(), summary);

    let json = cli(&["--scenario", &scen, "--out", o, "--force", "--format", "json", "run"]);
    assert_eq!(json.code, EXIT_OK, "{}", json.stderr);
    let rows: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("blocks.json")).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 60);
}

#[test]
fn events_are_ndjson() {
    let dir = tempfile::tempdir().unwrap();
    let scen = small_scenario(dir.path());
    let out = dir.path().join("out");
    assert_eq!(cli(&["--scenario", &scen, "--out", out.to_str().unwrap(), "run", "--events"]).code, EXIT_OK);
    let text = std::fs::read_to_string(out.join("events.ndjson")).unwrap();
    let mut kinds = std::collections::BTreeSet::new();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        kinds.insert(v["kind"].as_str().unwrap().to_owned());
        assert!(v["height"].is_u64());
    }
    for k in ["oct_submitted", "octs_inserted", "update", "revealed", "fill", "executed", "block_end"] {
        assert!(kinds.contains(k), "{k} missing from {kinds:?}");
    }
}

#[test]
fn lvr_summary_has_ratio_and_ci() {
    let dir = tempfile::tempdir().unwrap();
    let scen = small_scenario(dir.path());
    let out = dir.path().join("out");
    let r = cli(&["--scenario", &scen, "--out", out.to_str().unwrap(), "--jobs", "2", "lvr"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let report: LvrReport = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    let ci = report.ratio.unwrap();
    assert_eq!(report.runs, 6);
    assert!(ci.lo <= ci.mean && ci.mean <= ci.hi);
    assert!(out.join("runs.csv").exists());
}

#[test]
fn sweep_and_equilibrium_write_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let scen = small_scenario(dir.path());
    for (cmd, series) in [("sweep", "surface.csv"), ("equilibrium", "gaps.csv")] {
        let out = dir.path().join(cmd);
        let r = cli(&["--scenario", &scen, "--out", out.to_str().unwrap(), cmd]);
        assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
        assert!(out.join("summary.json").exists() && out.join(series).exists());
    }
}

#[test]
fn outputs_stay_inside_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let scen = small_scenario(dir.path());
    let out = dir.path().join("nested/out");
    assert_eq!(cli(&["--scenario", &scen, "--out", out.to_str().unwrap(), "run"]).code, EXIT_OK);
    let mut top: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    top.sort();
    assert_eq!(top, ["nested", "small.toml"]);
}
