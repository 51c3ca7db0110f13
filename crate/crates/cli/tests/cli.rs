use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn spherelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spherelab"))
        .args(args)
        .env("SPHERELAB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_scenario(dir: &Path, text: &str) -> String {
    let p = dir.join("scenario.json");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn analyze_round_has_zero_width() {
    let o = spherelab(&["analyze", "--family", "round", "--r", "0.7853981633974483", "--resolution", "16"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("width 0.000000000"), "{text}");
}

#[test]
fn clifford_scenario_passes() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        r#"{
            "schema": "spherelab/scenario-v1",
            "name": "clifford-J",
            "immersion": {"family": "clifford", "a": 1, "b": 1},
            "operations": [
                {"op": "analyze"},
                {"op": "assert-j", "lo": "0.25pi", "hi": "0.75pi", "tol": 1e-6}
            ],
            "resolution": 16
        }"#,
    );
    let out = dir.path().join("out");
    let o = spherelab(&["run", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let rep = report(&out);
    assert_eq!(rep["status"], "ok");
    let csv = std::fs::read_to_string(out.join("samples.csv")).unwrap();
    assert!(csv.lines().count() > 1);
    assert!(out.join("track.jsonl").exists());
}

#[test]
fn degenerate_translate_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        r#"{
            "schema": "spherelab/scenario-v1",
            "name": "translate-degenerate",
            "immersion": {"family": "clifford"},
            "operations": [{"op": "translate", "r": "0.25pi"}],
            "resolution": 16
        }"#,
    );
    let o = spherelab(&["run", &path, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let rep = report(dir.path());
    assert!(rep["diagnostics"][0]["message"].as_str().unwrap().contains("principal radius hit"));
}

#[test]
fn failed_assertion_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        r#"{
            "schema": "spherelab/scenario-v1",
            "name": "wrong-kappa",
            "immersion": {"family": "round", "r": "0.25pi"},
            "operations": [{"op": "assert-kappa", "values": [2.0]}],
            "resolution": 8
        }"#,
    );
    let o = spherelab(&["run", &path, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(report(dir.path())["diagnostics"][0]["kind"], "assertion");
}

#[test]
fn empty_operations_and_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        r#"{"schema": "spherelab/scenario-v1", "name": "empty", "immersion": {"family": "clifford"}, "operations": []}"#,
    );
    let o = spherelab(&["run", &path, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(dir.path())["results"].as_array().unwrap().len(), 0);

    let path = write_scenario(
        dir.path(),
        r#"{"schema": "spherelab/scenario-v1", "name": "bad", "immersion": {"family": "clifford", "c": 2}}"#,
    );
    let o = spherelab(&["run", &path, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(report(dir.path())["status"], "schema-error");
}

#[test]
fn reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        r#"{
            "schema": "spherelab/scenario-v1",
            "name": "repeat",
            "immersion": {"family": "round", "r": 0.6, "rotation": "random"},
            "operations": [{"op": "analyze"}, {"op": "dual"}, {"op": "analyze"}],
            "seed": 11,
            "resolution": 12
        }"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = spherelab(&["run", &path, "--out", d.to_str().unwrap()]);
        assert!(o.status.success());
    }
    for file in ["report.json", "samples.csv"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap());
    }
}

#[test]
fn quotient_prints_count() {
    let o = spherelab(&[
        "quotient", "--deck", "lens:3,1", "--family", "round", "--r", "0.5", "--resolution", "24",
    ]);
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert!(text.contains("k = 3") && text.contains("true"), "{text}");
}

#[test]
fn one_shot_outputs_and_translate() {
    let dir = tempfile::tempdir().unwrap();
    let o = spherelab(&[
        "translate", "--family", "round", "--r", "1.0", "--by", "0.3", "--resolution", "8", "--json", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let rep: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let mid = rep["results"][1]["data"]["J"]["mid"].as_f64().unwrap();
    assert!((mid - 0.7).abs() < 1e-9);
    assert_eq!(report(dir.path()), rep);
}

#[test]
fn verify_suite_subset() {
    let o = spherelab(&["verify-suite", "--resolution", "16", "--only", "1,2"]);
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 2);
}
