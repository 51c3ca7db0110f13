use serde_json::Value;
use spherelab_web::{analyze_json, embedding_json, project, transform_json};

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn analyze_round() {
    let v = parse(&analyze_json(r#"{"family": "round", "r": "0.25pi"}"#, 8).unwrap());
    assert!(v["J"]["width"].as_f64().unwrap() < 1e-9);
    assert!((v["min_kappa"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn transform_operations() {
    let spec = r#"{"family": "round", "r": 1.0}"#;
    let v = parse(&transform_json(spec, 6, "translate", 0.3).unwrap());
    let j = &v["analysis"]["J"];
    assert!((j["lo"].as_f64().unwrap() - 0.7).abs() < 1e-9);
    assert_eq!(v["points"].as_array().unwrap().len(), 6 * 6 * 6);
    let v = parse(&transform_json(spec, 6, "dual", 0.0).unwrap());
    assert!((v["analysis"]["min_kappa"].as_f64().unwrap() + 1.0f64.tan()).abs() < 1e-8);
    let v = parse(&transform_json(spec, 6, "moebius", 0.5).unwrap());
    assert!(v["analysis"]["min_kappa"].as_f64().unwrap() > 1.0 / 1.0f64.tan());
    assert!(transform_json(spec, 6, "spin", 0.0).is_err());
    assert!(transform_json(r#"{"family": "clifford"}"#, 6, "translate", 0.25 * std::f64::consts::PI).is_err());
}

#[test]
fn embedding_reports() {
    let v = parse(&embedding_json(r#"{"family": "clifford", "a": 2, "b": 1}"#, 24).unwrap());
    assert_eq!(v["embedded"], false);
    assert_eq!(v["m"], 2);
    let v = parse(&embedding_json(r#"{"family": "clifford"}"#, 16).unwrap());
    assert_eq!(v["embedded"], true);
}

#[test]
fn bad_input_is_an_error() {
    assert!(analyze_json("{", 8).is_err());
    assert!(analyze_json(r#"{"family": "torus"}"#, 8).is_err());
}

#[test]
fn projection_is_finite_and_centered() {
    let pts = vec![vec![0.0, 0.0, 0.0, -1.0], vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]];
    for p in project(&pts) {
        assert!(p.iter().all(|x| x.is_finite()));
    }
}
