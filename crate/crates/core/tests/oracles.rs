//! Independent reference computations compared against the library.

use std::f64::consts::{FRAC_PI_3, FRAC_PI_4};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spherelab::curvature::{spectra, spectrum};
use spherelab::immersion::Profile;
use spherelab::operators::{circumcenter, moebius_flow_monitor, s_grid};
use spherelab::rigidity::DeckGroup;
use spherelab::{ChartPoint, Error, Immersion};

/// Principal curvatures from finite differences of point evaluations only:
/// null-space normal, orientation from the determinant rule, second
/// fundamental form from the discrete Hessian.
fn fd_curvatures(f: &Immersion, cp: &ChartPoint) -> Vec<f64> {
    let n = f.dim();
    let h = 1e-4;
    let x = cp.params().to_vec();
    let eval = |d: &[f64]| -> DVector<f64> {
        let y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + b).collect();
        DVector::from_vec(f.point(&ChartPoint::new(cp.chart, &y)).unwrap())
    };
    let zero = vec![0.0; n];
    let p = eval(&zero);
    let m = p.len();
    let unit = |i: usize, s: f64| {
        let mut d = vec![0.0; n];
        d[i] = s;
        d
    };
    let cols: Vec<DVector<f64>> = (0..n)
        .map(|i| (eval(&unit(i, h)) - eval(&unit(i, -h))) / (2.0 * h))
        .collect();
    let mut hess = vec![vec![DVector::zeros(m); n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut pp = vec![0.0; n];
            let mut pm = vec![0.0; n];
            let mut mp = vec![0.0; n];
            let mut mm = vec![0.0; n];
            pp[i] += h;
            pp[j] += h;
            pm[i] += h;
            pm[j] -= h;
            mp[i] -= h;
            mp[j] += h;
            mm[i] -= h;
            mm[j] -= h;
            hess[i][j] = (eval(&pp) - eval(&pm) - eval(&mp) + eval(&mm)) / (4.0 * h * h);
        }
    }
    // normal: orthogonal to p and the columns
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for v in cols.iter().chain(std::iter::once(&p)) {
        let mut w = v.clone();
        for b in &basis {
            w -= b * b.dot(&w);
        }
        basis.push(w.normalize());
    }
    let mut nu = (0..m)
        .map(|i| {
            let mut w = DVector::zeros(m);
            w[i] = 1.0;
            for b in &basis {
                w -= b * b.dot(&w);
            }
            w
        })
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap()
        .normalize();
    let mut frame = DMatrix::zeros(m, m);
    for (k, c) in cols.iter().enumerate() {
        frame.set_column(k, c);
    }
    frame.set_column(n, &nu);
    frame.set_column(n + 1, &p);
    let orient = f.domain.chart_orientation(cp.chart);
    if frame.determinant() * orient < 0.0 {
        nu = -nu;
    }
    let g = DMatrix::from_fn(n, n, |i, j| cols[i].dot(&cols[j]));
    let b = DMatrix::from_fn(n, n, |i, j| nu.dot(&hess[i][j]));
    let s = g.try_inverse().unwrap() * b;
    let mut ev: Vec<f64> = s.complex_eigenvalues().iter().map(|z| z.re).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[test]
fn curvature_matches_finite_difference_oracle() {
    let fams = [
        Immersion::radial_graph(2, FRAC_PI_4, 0.2, Profile::Mixed).unwrap(),
        Immersion::clifford(1, 1).unwrap(),
        Immersion::round_simple(2, 1.1).unwrap(),
    ];
    for f in &fams {
        let f = f.clone().with_resolution(5);
        for cp in f.samples().iter().step_by(7) {
            let lib = spectrum(&f, cp).unwrap();
            let fd = fd_curvatures(&f, cp);
            for (a, b) in lib.kappas.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-4, "{:?}: library {a}, oracle {b}", cp);
            }
        }
    }
}

fn circumscribed(points: &[&DVector<f64>]) -> Option<DVector<f64>> {
    // center c on the sphere equidistant from the given points, on their side
    let m = points[0].len();
    match points.len() {
        2 => {
            let c = points[0] + points[1];
            (c.norm() > 1e-12).then(|| c.normalize())
        }
        3 => {
            // solve <c, p0 - p1> = 0, <c, p0 - p2> = 0 in R^3, pick sign toward p0
            assert_eq!(m, 3);
            let d1 = points[0] - points[1];
            let d2 = points[0] - points[2];
            let c = d1.cross(&d2);
            if c.norm() < 1e-12 {
                return None;
            }
            let c = c.normalize();
            Some(if c.dot(points[0]) < 0.0 { -c } else { c })
        }
        _ => None,
    }
}

#[test]
fn circumcap_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let count = rng.gen_range(3..9);
        let pts: Vec<DVector<f64>> = (0..count)
            .map(|_| {
                let v = DVector::from_vec(vec![
                    rng.gen_range(-0.6..0.6),
                    rng.gen_range(-0.6..0.6),
                    -1.0,
                ]);
                v.normalize()
            })
            .collect();
        let raw: Vec<Vec<f64>> = pts.iter().map(|p| p.as_slice().to_vec()).collect();
        let cap = circumcenter(&raw).unwrap();
        let mut best = f64::INFINITY;
        let refs: Vec<&DVector<f64>> = pts.iter().collect();
        let mut try_center = |c: DVector<f64>| {
            let r = refs.iter().map(|p| c.dot(p).clamp(-1.0, 1.0).acos()).fold(0.0, f64::max);
            best = best.min(r);
        };
        for i in 0..count {
            for j in i + 1..count {
                if let Some(c) = circumscribed(&[refs[i], refs[j]]) {
                    try_center(c);
                }
                for k in j + 1..count {
                    if let Some(c) = circumscribed(&[refs[i], refs[j], refs[k]]) {
                        try_center(c);
                    }
                }
            }
        }
        assert!((cap.radius - best).abs() < 1e-9, "library {} vs exhaustive {best}", cap.radius);
    }
}

#[test]
fn moebius_curvature_of_round_spheres() {
    // M_s shrinks a geodesic sphere of radius r about its center to radius
    // 2 atan(s tan(r/2)), so its curvature is the cotangent of that
    for r in [0.5, FRAC_PI_3, 1.2] {
        let f = Immersion::round_simple(2, r).unwrap().with_resolution(6);
        let rep = moebius_flow_monitor(&f, &s_grid(0.4, 0.2), false).unwrap();
        for e in &rep.entries {
            let rs = 2.0 * (e.s * (r / 2.0).tan()).atan();
            assert!((e.mu - 1.0 / rs.tan()).abs() < 1e-9, "s = {}: {} vs {}", e.s, e.mu, 1.0 / rs.tan());
        }
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[test]
fn lens_freeness_follows_coprimality() {
    for p in 2..9u32 {
        for q in 0..p {
            let free = gcd(p, q) == 1;
            match DeckGroup::lens(p, q) {
                Ok(g) => {
                    assert!(free, "lens({p},{q}) accepted");
                    assert_eq!(g.order(), p as usize);
                    assert!(g.sampled_displacement(200, 1) > 1e-3);
                }
                Err(Error::NonFreeAction { .. }) => assert!(!free, "lens({p},{q}) rejected"),
                Err(e) => panic!("unexpected error {e}"),
            }
        }
    }
}

#[test]
fn clifford_curvatures_closed_form() {
    // f(θ, φ) = (cos aθ, sin aθ, cos bφ, sin bφ)/√2 has principal curvatures ±1
    // independent of the wrapping numbers
    for (a, b) in [(1, 1), (2, 1), (3, 2)] {
        let f = Immersion::clifford(a, b).unwrap().with_resolution(6);
        for s in spectra(&f).unwrap() {
            assert!((s.kappas[0] + 1.0).abs() < 1e-10 && (s.kappas[1] - 1.0).abs() < 1e-10);
        }
    }
}
