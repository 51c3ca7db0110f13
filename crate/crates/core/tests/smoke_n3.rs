//! Hypersurfaces of S⁴ at a coarse resolution.

use spherelab::curvature::{radii_interval, spectra};
use spherelab::immersion::Profile;
use spherelab::operators::{dual, normal_translate};
use spherelab::rigidity::{self_intersections, IntersectionParams};
use spherelab::Immersion;

const RES: usize = 4;

#[test]
fn round_three_sphere_is_umbilic() {
    let r = 0.9;
    let f = Immersion::round_simple(3, r).unwrap().with_resolution(RES);
    assert_eq!(f.target_dim(), 5);
    for s in spectra(&f).unwrap() {
        assert_eq!(s.kappas.len(), 3);
        for k in &s.kappas {
            assert!((k - 1.0 / r.tan()).abs() < 1e-9);
        }
    }
}

#[test]
fn translate_and_dual_in_dimension_three() {
    let f = Immersion::round_simple(3, 0.9).unwrap().with_resolution(RES);
    let t = normal_translate(&f, 0.3).unwrap();
    let j = radii_interval(&t).unwrap();
    assert!((j.mid - 0.6).abs() < 1e-9 && j.half_width < 1e-9);
    let d = dual(&f).unwrap();
    for s in spectra(&d).unwrap() {
        for k in &s.kappas {
            // κ★ = (-1)^{l+1}/κ with l = 3
            assert!((k - 0.9f64.tan()).abs() < 1e-8, "{k}");
        }
    }
}

#[test]
fn radial_graph_in_dimension_three_is_embedded() {
    let f = Immersion::radial_graph(3, 0.8, 0.03, Profile::Mixed).unwrap().with_resolution(RES + 2);
    let rep = self_intersections(&f, &IntersectionParams::default()).unwrap();
    assert!(rep.embedded, "{:?}", rep.clusters.first());
    assert_eq!(rep.m, 1);
}
