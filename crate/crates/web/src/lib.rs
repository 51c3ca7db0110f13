//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes an immersion description in the scenario JSON format,
//! for example `{"family": "round", "r": "0.3pi"}`, and returns JSON.

use serde_json::{json, Value};
use spherelab::curvature::{classify_samples, spectra};
use spherelab::operators::{self, DEFAULT_MARGIN};
use spherelab::rigidity::{self_intersections, IntersectionParams};
use spherelab::scenario::{build_immersion, FamilySpec};
use spherelab::Immersion;
use wasm_bindgen::prelude::*;

/// Resolution cap keeping the page responsive.
pub const MAX_RESOLUTION: usize = 40;

fn build(spec: &str, resolution: usize) -> Result<Immersion, String> {
    let family: FamilySpec = serde_json::from_str(spec).map_err(|e| format!("bad immersion: {e}"))?;
    build_immersion(&family, resolution.clamp(2, MAX_RESOLUTION), 0).map_err(|e| e.to_string())
}

fn summary(f: &Immersion) -> Result<Value, String> {
    let samples = spectra(f).map_err(|e| e.to_string())?;
    let hyp = classify_samples(&samples, DEFAULT_MARGIN);
    Ok(json!({
        "J": { "lo": hyp.interval.lo(), "hi": hyp.interval.hi(), "width": hyp.interval.width() },
        "min_kappa": hyp.min_kappa,
        "max_kappa": hyp.max_kappa,
        "locally_convex": hyp.locally_convex,
        "l_count": hyp.l_count,
    }))
}

/// Stereographic projection of S³ into ℝ³ from the antipode of the mean point.
pub fn project(points: &[Vec<f64>]) -> Vec<[f64; 3]> {
    let m = points.first().map_or(0, Vec::len);
    let mut c = vec![0.0; m];
    for p in points {
        for (a, b) in c.iter_mut().zip(p) {
            *a += b;
        }
    }
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-9 {
        c = vec![0.0; m];
        c[m - 1] = -1.0;
    } else {
        c.iter_mut().for_each(|x| *x /= norm);
    }
    // orthonormal complement of c
    let mut basis: Vec<Vec<f64>> = vec![c.clone()];
    for i in 0..m {
        let mut w = vec![0.0; m];
        w[i] = 1.0;
        for b in &basis {
            let d: f64 = b.iter().zip(&w).map(|(x, y)| x * y).sum();
            w.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            basis.push(w.into_iter().map(|x| x / n).collect());
        }
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    points
        .iter()
        .map(|p| {
            let denom = (1.0 + dot(p, &c)).max(1e-6);
            let mut out = [0.0; 3];
            for (k, b) in basis.iter().skip(1).take(3).enumerate() {
                out[k] = dot(p, b) / denom;
            }
            out
        })
        .collect()
}

/// Curvature summary of the described immersion.
pub fn analyze_json(spec: &str, resolution: usize) -> Result<String, String> {
    let f = build(spec, resolution)?;
    Ok(summary(&f)?.to_string())
}

/// Applies `op` (`none`, `translate`, `dual` or `moebius`) and returns the
/// projected sample points with the new curvature summary.
pub fn transform_json(spec: &str, resolution: usize, op: &str, amount: f64) -> Result<String, String> {
    let f = build(spec, resolution)?;
    let g = match op {
        "none" => f,
        "translate" => operators::normal_translate(&f, amount).map_err(|e| e.to_string())?,
        "dual" => operators::dual(&f).map_err(|e| e.to_string())?,
        "moebius" => {
            let cap = operators::image_circumcap(&f).map_err(|e| e.to_string())?;
            operators::apply_moebius(&f, &cap.center, amount).map_err(|e| e.to_string())?
        }
        other => return Err(format!("unknown operation {other:?}")),
    };
    let pts = g.points().map_err(|e| e.to_string())?;
    let side = g.resolution;
    Ok(json!({
        "points": if g.target_dim() == 4 { project(&pts) } else { Vec::new() },
        "side": side,
        "analysis": summary(&g)?,
    })
    .to_string())
}

/// Self-intersection report of the described immersion.
pub fn embedding_json(spec: &str, resolution: usize) -> Result<String, String> {
    let f = build(spec, resolution)?;
    let rep = self_intersections(&f, &IntersectionParams::default()).map_err(|e| e.to_string())?;
    Ok(json!({
        "embedded": rep.embedded,
        "m": rep.m,
        "clusters": rep.clusters.len(),
        "warnings": rep.warnings,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn analyze(spec: &str, resolution: usize) -> Result<String, JsValue> {
    analyze_json(spec, resolution).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn transform(spec: &str, resolution: usize, op: &str, amount: f64) -> Result<String, JsValue> {
    transform_json(spec, resolution, op, amount).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn check_embedding(spec: &str, resolution: usize) -> Result<String, JsValue> {
    embedding_json(spec, resolution).map_err(|e| JsValue::from_str(&e))
}
