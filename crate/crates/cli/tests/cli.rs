use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn threetank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_threetank")).args(args).output().expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn linearize_default_operating_point() {
    let v = json_stdout(&threetank(&["linearize"]));
    let f00 = v["F"][0][0].as_f64().unwrap();
    assert!((f00 + 1.1369e-2).abs() < 1e-6, "F[0][0] = {f00}");
    assert_eq!(v["A_d"].as_array().unwrap().len(), 3);
    assert_eq!(v["B_d"][0].as_array().unwrap().len(), 2);
}

#[test]
fn design_places_requested_poles() {
    let v = json_stdout(&threetank(&["design", "--poles", "0.92,0.97,0.9+0.02i,0.9-0.02i,0.94"]));
    assert_eq!(v["K"].as_array().unwrap().len(), 2);
    assert_eq!(v["K"][0].as_array().unwrap().len(), 5);
    let mut got: Vec<(f64, f64)> = v["closed_loop_poles"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| (p[0].as_f64().unwrap(), p[1].as_f64().unwrap()))
        .collect();
    got.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let want = [(0.9, -0.02), (0.9, 0.02), (0.92, 0.0), (0.94, 0.0), (0.97, 0.0)];
    for (g, w) in got.iter().zip(want) {
        assert!((g.0 - w.0).abs() < 1e-8 && (g.1 - w.1).abs() < 1e-8, "{got:?}");
    }
}

#[test]
fn simulate_then_metrics_agree() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("run.csv");
    let sim = json_stdout(&threetank(&["simulate", "--preset", "estimation", "--out", path(&csv)]));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "t,h1,h2,h3,y1,y2,y3,yr1,yr2,u1,u2,zeta1,zeta2,xhat1,xhat2,xhat3,z1,z2,sat1,sat2"
    );
    assert_eq!(text.lines().count(), 3001);

    let re = json_stdout(&threetank(&["metrics", "--csv", path(&csv)]));
    for key in ["tracking_rmse", "estimation_rmse", "measurement_rmse"] {
        let (a, b) = (sim[key].as_array().unwrap(), re[key].as_array().unwrap());
        for (x, y) in a.iter().zip(b) {
            assert!((x.as_f64().unwrap() - y.as_f64().unwrap()).abs() <= 1e-12, "{key}: {x} vs {y}");
        }
    }
    assert_eq!(sim["settling"], re["settling"]);
}

#[test]
fn config_file_round_trip_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let preset = threetank(&["preset", "decoupling"]);
    assert!(preset.status.success());
    let cfg = dir.path().join("scenario.json");
    let mut value: Value = serde_json::from_slice(&preset.stdout).unwrap();
    value["duration"] = Value::from(600.0);
    value["noise_std"] = serde_json::json!([0.002, 0.002, 0.002]);
    std::fs::write(&cfg, value.to_string()).unwrap();

    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    json_stdout(&threetank(&["simulate", "--config", path(&cfg), "--out", path(&a)]));
    json_stdout(&threetank(&["simulate", "--config", path(&cfg), "--out", path(&b)]));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let c = dir.path().join("c.csv");
    json_stdout(&threetank(&["simulate", "--config", path(&cfg), "--out", path(&c), "--seed", "5"]));
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn csv_goes_to_stdout_without_out() {
    let out = threetank(&["simulate", "--preset", "open-loop"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("t,h1,h2,h3"));
    let metrics: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(metrics["samples"], 1000);
}

#[test]
fn exit_code_one_for_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    for body in [r#"{"mode": "fly"}"#, r#"{"duration": -5}"#, r#"{"noise_std": [0.1, -1, 0]}"#, "not json"] {
        std::fs::write(&cfg, body).unwrap();
        let out = threetank(&["simulate", "--config", path(&cfg)]);
        assert_eq!(out.status.code(), Some(1), "{body}");
        assert!(!out.stderr.is_empty());
    }
    assert_eq!(threetank(&["simulate", "--config", "/nonexistent/x.json"]).status.code(), Some(1));
    assert_eq!(threetank(&["linearize", "--y0", "0.2,0.4,0.3"]).status.code(), Some(1));
    assert_eq!(threetank(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn exit_code_two_for_numerical_failure() {
    let out = threetank(&["design", "--poles", "0.9,0.9,0.9,0.9,0.9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pole placement"));
}
