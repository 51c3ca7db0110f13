use std::f64::consts::PI;

use proptest::prelude::*;
use spherelab::curvature::{circle_distance, interval_of, mod_pi, spectra};
use spherelab::immersion::Profile;
use spherelab::operators::{dual, normal_translate, pointwise_distance, shifted_radii, TwistedClass};
use spherelab::rigidity::{self_intersections, IntersectionParams};
use spherelab::scenario::{parse_angle, random_rotation};
use spherelab::{DomainDiffeo, Immersion};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 12,
        ..ProptestConfig::default()
    }
}

fn profile() -> impl Strategy<Value = Profile> {
    prop_oneof![Just(Profile::Zonal), Just(Profile::Quadrupole), Just(Profile::Mixed)]
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn interval_covers_radii(radii in prop::collection::vec(0.0..PI, 1..20)) {
        let j = interval_of(&radii);
        prop_assert!(j.width() <= PI + 1e-12);
        for &r in &radii {
            prop_assert!(j.contains(r, 1e-12));
        }
        // minimality: some radius sits on each end
        let near = |a: f64| radii.iter().any(|&r| circle_distance(r, a) < 1e-9);
        prop_assert!(near(j.lo()) && near(j.hi()));
    }

    #[test]
    fn interval_shift_equivariance(radii in prop::collection::vec(0.0..PI, 1..12), t in -3.0..3.0f64) {
        let j = interval_of(&radii);
        prop_assume!(!j.non_unique);
        let moved: Vec<f64> = radii.iter().map(|r| r + t).collect();
        prop_assert!(interval_of(&moved).approx_eq(&j.shifted(t), 1e-9));
    }

    #[test]
    fn curvature_is_rotation_invariant(eps in 0.0..0.1f64, p in profile(), seed in 0u64..1000) {
        let f = Immersion::radial_graph(2, 1.0, eps, p).unwrap().with_resolution(5);
        let g = f.postcompose_rotation(random_rotation(4, seed)).unwrap();
        for (a, b) in spectra(&f).unwrap().iter().zip(&spectra(&g).unwrap()) {
            for (x, y) in a.kappas.iter().zip(&b.kappas) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn translate_shifts_radii(eps in 0.0..0.05f64, p in profile(), r in 0.2..1.4f64) {
        let f = Immersion::radial_graph(2, 0.7, eps, p).unwrap().with_resolution(4);
        let before = spectra(&f).unwrap();
        prop_assume!(before.iter().all(|s| s.radii.iter().all(|&rho| circle_distance(rho, r) > 0.05)));
        let after = spectra(&normal_translate(&f, r).unwrap()).unwrap();
        for (a, b) in before.iter().zip(&after) {
            let expected = shifted_radii(&a.radii, r);
            let mut got = b.radii.clone();
            got.sort_by(f64::total_cmp);
            for (x, y) in expected.iter().zip(&got) {
                prop_assert!(circle_distance(*x, *y) < 1e-8, "{expected:?} vs {got:?}");
            }
        }
    }

    #[test]
    fn double_dual_of_convex_round_is_antipodal(r in 0.2..1.4f64, seed in 0u64..1000) {
        let f = Immersion::round_simple(2, r)
            .unwrap()
            .postcompose_rotation(random_rotation(4, seed))
            .unwrap()
            .with_resolution(4);
        let dd = dual(&dual(&f).unwrap()).unwrap();
        for (a, b) in f.points().unwrap().iter().zip(&dd.points().unwrap()) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x + y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn twisted_canonical_is_idempotent(seed in 0u64..1000) {
        let q = random_rotation(4, seed);
        let g = DomainDiffeo::squeeze(2, 1.3).unwrap();
        let c = TwistedClass::canonical(&q, &g).unwrap();
        let cc = TwistedClass::canonical(&c.rotation, &c.diffeo).unwrap();
        prop_assert!(c.distance(&cc, 2, 4).unwrap() < 1e-9);
        // the class itself is unchanged: both representatives give the same map
        let a = spherelab::operators::psi(&q, &g, 0.6).unwrap().with_resolution(4);
        let b = spherelab::operators::psi(&c.rotation, &c.diffeo, 0.6).unwrap().with_resolution(4);
        prop_assert!(pointwise_distance(&a, &b).unwrap() < 1e-9);
    }

    #[test]
    fn angle_strings_round_trip(k in -4.0..4.0f64) {
        let parsed = parse_angle(&format!("{k}pi")).unwrap();
        prop_assert!((parsed - k * PI).abs() < 1e-12);
        let plain = k.to_string();
        prop_assert!((parse_angle(&plain).unwrap() - k).abs() < 1e-15);
        prop_assert!(mod_pi(parsed) >= 0.0 && mod_pi(parsed) < PI);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 3, ..ProptestConfig::default() })]

    #[test]
    fn intersection_count_is_rotation_invariant(seed in 0u64..1000) {
        let params = IntersectionParams::default();
        let f = Immersion::clifford(2, 1).unwrap().with_resolution(24);
        let g = f.postcompose_rotation(random_rotation(4, seed)).unwrap();
        let a = self_intersections(&f, &params).unwrap();
        let b = self_intersections(&g, &params).unwrap();
        prop_assert_eq!(a.embedded, b.embedded);
        prop_assert_eq!(a.m, b.m);
    }
}
