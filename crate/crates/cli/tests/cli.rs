//! End-to-end runs of the binary.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfg-evo"))
}

fn run_ok(args: &[&str]) {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_mf_writes_four_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mf");
    run_ok(&["simulate-mf", "--scenario", "mac", "--out", out.to_str().unwrap()]);
    for f in ["trajectory.csv", "xz.csv", "meta.json", "plot.svg"] {
        assert!(fs::metadata(out.join(f)).unwrap().len() > 0, "{f}");
    }
    let svg = fs::read_to_string(out.join("plot.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    let header = fs::read_to_string(out.join("xz.csv")).unwrap();
    assert!(header.lines().next().unwrap().ends_with("z_norm"));
}

#[test]
fn plots_can_be_disabled() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["simulate-mf", "--out", dir.path().to_str().unwrap(), "--plots", "false"]);
    assert!(!dir.path().join("plot.svg").exists());
}

#[test]
fn bad_kernel_row_is_reported_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.toml");
    fs::write(
        &spec,
        r#"
[[classes]]
name = "users"
states = ["idle", "busy"]
actions = ["wait", "send"]
available = [["wait", "send"], ["wait"]]
kernel = [[[0.5, 0.5], [0.2, 0.7]], [[0.4, 0.6]]]

[classes.reward]
kind = "table"
values = [[0.0, 1.0], [0.5, 0.0]]
"#,
    )
    .unwrap();
    let out = bin()
        .args(["simulate-mf", "--spec", spec.to_str().unwrap(), "--out"])
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("users") || msg.contains("class 0"), "{msg}");
    assert!(msg.contains("idle") || msg.contains("state 0"), "{msg}");
    assert!(msg.contains("send") || msg.contains("action 1"), "{msg}");
}

#[test]
fn epsilon_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["simulate-mf", "--eps", "1e-3", "--t-max", "2", "--out", dir.path().to_str().unwrap()]);
    let meta = json(&dir.path().join("meta.json"));
    assert!((meta["epsilon"].as_f64().unwrap() - 1e-3).abs() < 1e-15);
    let rd = meta["rate_state_min"].as_f64().unwrap();
    let rr = meta["rate_revision_max"].as_f64().unwrap();
    assert!((rr / rd - 1e-3).abs() < 1e-15);
}

#[test]
fn unknown_scenario_fails() {
    let out = bin().args(["simulate-mf", "--scenario", "traffic"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown scenario"));
}

#[test]
fn find_msne_on_mac_is_nonempty() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["find-msne", "--out", dir.path().to_str().unwrap()]);
    let eq = json(&dir.path().join("equilibria.json"));
    let list = eq["equilibria"].as_array().unwrap();
    assert!(!list.is_empty());
    assert!(list.iter().any(|r| r["is_msne"].as_bool().unwrap()));
}

#[test]
fn dominant_policy_toy_has_one_strict_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("toy.json");
    fs::write(
        &spec,
        r#"{"classes": [{"name": "c", "states": ["s"], "actions": ["a", "b"],
            "available": [["a", "b"]], "kernel": [[[1.0], [1.0]]],
            "reward": {"kind": "table", "values": [[1.0, 0.5]]}}]}"#,
    )
    .unwrap();
    run_ok(&["find-msne", "--spec", spec.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let eq = json(&dir.path().join("equilibria.json"));
    let list = eq["equilibria"].as_array().unwrap();
    assert_eq!(list.len(), 1);
    assert!(list[0]["is_strict"].as_bool().unwrap());
}

#[test]
fn check_ess_on_mac_and_negated_payoff() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_ok(&["check-ess", "--out", a.to_str().unwrap()]);
    let cert = json(&a.join("certificate.json"));
    assert_eq!(cert["verdict"], "regular_ess");
    assert!(cert["spectrum"].as_array().unwrap().len() >= 2);
    assert!(!cert["null_directions"].as_array().unwrap().is_empty());
    let x: Vec<String> = cert["eval_point"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap().to_string())
        .collect();
    run_ok(&["check-ess", "--negate-payoff", "--x-star", &x.join(","), "--out", b.to_str().unwrap()]);
    let neg = json(&b.join("certificate.json"));
    assert_eq!(neg["verdict"], "not_ess");
    assert!(neg["max_eigenvalue"].as_f64().unwrap() >= 1e-3);
}

#[test]
fn finite_simulation_has_one_column_per_size() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["simulate-finite", "--n", "50,200", "--seed", "1", "--out", dir.path().to_str().unwrap()]);
    let kl = fs::read_to_string(dir.path().join("kl.csv")).unwrap();
    assert_eq!(kl.lines().next().unwrap(), "t,kl_n50,kl_n200");
}

#[test]
fn emitted_scenario_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    for fmt in ["json", "toml"] {
        run_ok(&["emit-scenario", "--scenario", "random-generic", "--seed", "4", "--format", fmt, "--out", dir.path().to_str().unwrap()]);
        let spec = dir.path().join(format!("spec.{fmt}"));
        run_ok(&["dump-matrices", "--spec", spec.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        let m = json(&dir.path().join("matrices.json"));
        assert!(m["identities"]["residuals"].as_array().unwrap().iter().all(|r| r.as_f64().unwrap() < 1e-10));
    }
}

#[test]
fn mac_demo_produces_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["mac-demo", "--n", "100,1000", "--out", dir.path().to_str().unwrap()]);
    for f in [
        "spec.json",
        "decomposition.json",
        "equilibria.json",
        "certificate.json",
        "eps_sweep.csv",
        "kl.csv",
        "trajectory.svg",
        "eps_sweep.svg",
        "kl.svg",
        "meta.json",
    ] {
        assert!(fs::metadata(dir.path().join(f)).unwrap().len() > 0, "{f}");
    }
    let cert = json(&dir.path().join("certificate.json"));
    assert!(cert["null_directions"][0]["pi_residual"].is_number());
}

#[test]
fn thread_cap_must_be_numeric() {
    let out = bin().args(["simulate-mf"]).env("MFG_EVO_THREADS", "many").output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn symmetric_toy_has_mixed_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("sym.json");
    fs::write(
        &spec,
        r#"{"classes": [{"name": "c", "states": ["s"], "actions": ["a", "b"],
            "available": [["a", "b"]], "kernel": [[[1.0], [1.0]]],
            "reward": {"kind": "congestion_affine", "base": [[1.0, 1.0]], "slope": [1.0, 1.0]}}]}"#,
    )
    .unwrap();
    run_ok(&["find-msne", "--spec", spec.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let eq = json(&dir.path().join("equilibria.json"));
    let list = eq["equilibria"].as_array().unwrap();
    assert_eq!(list.len(), 1);
    let x: Vec<f64> = list[0]["x"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((x[0] - 0.5).abs() < 1e-7 && (x[1] - 0.5).abs() < 1e-7, "{x:?}");
    assert!(!list[0]["is_strict"].as_bool().unwrap());
}
