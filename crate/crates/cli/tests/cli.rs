use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ptlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptlab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn report(out: &Path, name: &str) -> Value {
    let text = std::fs::read_to_string(out.join(format!("{name}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn average_writes_a_decreasing_error_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = ptlab(&["average", "--quiet"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let csv = std::fs::read_to_string(dir.path().join("average.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("scenario,lambda,error"));
    let rows: Vec<(String, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[2].parse().unwrap())
        })
        .collect();
    for name in ["heat", "damped_wave"] {
        let e: Vec<f64> = rows.iter().filter(|r| r.0 == name).map(|r| r.1).collect();
        assert_eq!(e.len(), 7);
        assert!(e.windows(2).all(|w| w[1] < w[0]), "{name}: {e:?}");
    }
    let r = report(dir.path(), "average");
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["passed"], true);
}

#[test]
fn resonance_second_mode_has_index_minus_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("res.json");
    std::fs::write(&cfg, r#"{"index": {"resonant_modes": [2], "epsilons": [0.01]}}"#).unwrap();
    let out = ptlab(&["resonance", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path(), "resonance");
    let first = &r["report"]["index"]["cases"][0]["reports"][0];
    assert_eq!(first["formula_index"], -1);
    assert_eq!(first["direct_index"], -1);
}

#[test]
fn invalid_variant_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"problem": {"variant": "plate"}}"#).unwrap();
    let out = ptlab(&["periodic", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unknown variant"), "{err}");
    assert!(!dir.path().join("periodic.json").exists());
}

#[test]
fn unknown_field_and_bad_values_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"radius": 1.0, "colour": "red"}"#).unwrap();
    assert_eq!(ptlab(&["degree", "--config", cfg.to_str().unwrap()], dir.path()).status.code(), Some(2));
    std::fs::write(&cfg, r#"{"problem": {"variant": "heat", "modes": 0}}"#).unwrap();
    assert_eq!(ptlab(&["simulate", "--config", cfg.to_str().unwrap()], dir.path()).status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    assert_eq!(ptlab(&["cone", "--config", missing.to_str().unwrap()], dir.path()).status.code(), Some(2));
}

#[test]
fn reruns_agree_except_for_the_timestamp() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert_eq!(ptlab(&["krasnoselskii", "--seed", "3"], d.path()).status.code(), Some(0));
    }
    let mut ra = report(a.path(), "krasnoselskii");
    let mut rb = report(b.path(), "krasnoselskii");
    assert_eq!(ra["seed"], 3);
    ra.as_object_mut().unwrap().remove("timestamp");
    rb.as_object_mut().unwrap().remove("timestamp");
    assert_eq!(ra, rb);
}

#[test]
fn simulate_honours_mode_and_step_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = ptlab(&["simulate", "--modes", "3", "--steps", "64"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "t,u_1,u_2,u_3,v_1,v_2,v_3,norm_l2,norm_half,energy");
    // 4 periods of 64 steps at stride 4, plus the initial sample
    assert_eq!(csv.lines().count(), 1 + 4 * 64 / 4 + 1);
    let r = report(dir.path(), "simulate");
    assert_eq!(r["report"]["final_state"]["u"].as_array().unwrap().len(), 3);
}

#[test]
fn degree_query_on_a_small_ball_around_a_buckled_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("deg.json");
    let c = format!(r#"{{"center": [{}], "radius": 0.5, "expected": 1}}"#, 1.5f64.sqrt());
    std::fs::write(&cfg, c).unwrap();
    let out = ptlab(&["degree", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(report(dir.path(), "degree")["report"]["degree"]["degree"], 1);
}
