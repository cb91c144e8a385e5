use std::path::Path;
use std::process::{Command, Output};

fn wearpath(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wearpath"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const QUICK: &str = r#"{
  "iterations": 2,
  "output_dir": "out",
  "planner": {"restarts": 1, "max_iterations": 60, "q": [[1e10, 0, 0], [0, 1e10, 0], [0, 0, 1e8]]}
}"#;

#[test]
fn single_step_subcommands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUICK);
    let out = dir.path().join("out");

    let o = wearpath(&["--config", &cfg, "calibrate"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("calibration.csv").exists());
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("calibration_fit.json")).unwrap()).unwrap();
    assert!((fit["params"]["theta"].as_f64().unwrap() + 800.0).abs() < 1e-6);

    let o = wearpath(&["--config", &cfg, "plan", "--arm", "baseline"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let plan = out.join("baseline/plan.csv");
    assert!(plan.exists());

    let o = wearpath(
        &[
            "--config",
            &cfg,
            "execute",
            "--arm",
            "baseline",
            "--plan",
            plan.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let canvas = out.join("baseline/canvas.pgm");
    assert!(out.join("baseline/trace.csv").exists());

    let o = wearpath(
        &["--config", &cfg, "measure", "--canvas", canvas.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("V "), "{stdout}");
    assert!(out.join("profile.csv").exists());

    // the first iteration of the loop is exactly the chain above
    let o = wearpath(&["--config", &cfg, "iterate", "--arm", "baseline"], dir.path());
    assert!(o.status.success());
    let v_chain: f64 = stdout.split_whitespace().nth(1).unwrap().parse().unwrap();
    let rows = std::fs::read_to_string(out.join("baseline/iterations.csv")).unwrap();
    let v_loop: f64 = rows.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!((v_chain - v_loop).abs() <= 1e-9 * v_loop, "{v_chain} vs {v_loop}");
    assert_eq!(rows.lines().count(), 3);
}

#[test]
fn compare_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUICK);
    let o = wearpath(&["--config", &cfg, "--out", "elsewhere", "compare"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("elsewhere");
    assert!(out.join("iterations.csv").exists());
    assert!(out.join("summary.json").exists());
    assert!(out.join("tilted/iter_02/canvas.pgm").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = wearpath(&["--config", "missing.json", "compare"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let bad = write_config(dir.path(), r#"{"iterations": 0}"#);
    let o = wearpath(&["--config", &bad, "compare"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("iterations"));

    let o = wearpath(&["--config", &bad, "frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    // a canvas with no border cannot hold the footprint: numerical failure
    let tight = write_config(dir.path(), r#"{"iterations": 1, "canvas": {"margin_m": 0.0}}"#);
    let o = wearpath(&["--config", &tight, "iterate"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
