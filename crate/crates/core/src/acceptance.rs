//! Verification battery: fourteen numbered checks with fixed tolerances,
//! shared by the `verify-suite` command and the test suite.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, FRAC_PI_6, PI};
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curvature::{circle_distance, interval_of_samples, spectra, spectrum, CircleInterval};
use crate::error::{Error, Result};
use crate::homotopy::{deform_to_round, track_zeta, uniform_grid, zeta_cap_radius};
use crate::immersion::{DomainDiffeo, Immersion, Profile};
use crate::operators::{
    dual, hemisphere_locus, image_circumcap, moebius_flow_monitor, normal_translate, phi_convex, phi_hemi,
    pointwise_distance, psi, s_grid, shifted_radii, translate_l, TwistedClass,
};
use crate::rigidity::{multiplicity_bound_check, preimage_components, self_intersections, DeckGroup, IntersectionParams};
use crate::scenario::random_rotation;
use crate::sphere::{dzeta, zeta, Rotation, SpherePoint, TangentVector};
use crate::par_map;

/// Wall-time budgets in seconds.
pub const CALIBRATION_BUDGET: f64 = 5.0;
pub const DEFORM_BUDGET: f64 = 60.0;
pub const SUITE_BUDGET: f64 = 600.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub resolution: usize,
    pub results: Vec<CriterionResult>,
    pub total_seconds: f64,
    pub all_passed: bool,
}

impl SuiteReport {
    /// One line per criterion.
    pub fn table(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            out.push_str(&format!(
                "[{}] {:>2} {:<24} {:>8.2}s  {}\n",
                if r.passed { "PASS" } else { "FAIL" },
                r.id,
                r.name,
                r.seconds,
                r.detail
            ));
        }
        out
    }
}

pub const NAMES: [&str; 14] = [
    "calibration",
    "clifford-data",
    "radii-shift",
    "gauss-of-translate",
    "dual-laws",
    "hemisphere-lemma",
    "moebius-monotonicity",
    "zeta-bound",
    "zeta-track",
    "psi-phi-round-trip",
    "deform-to-round",
    "embedding-detection",
    "covering-counts",
    "suite-wall-time",
];

type Check = Result<(bool, String)>;

/// Runs criterion `id` (1 to 13) at the given resolution.
pub fn run_criterion(id: u32, resolution: usize) -> CriterionResult {
    let start = Instant::now();
    let out: Check = match id {
        1 => calibration(resolution, start),
        2 => clifford_data(resolution),
        3 => radii_shift(resolution),
        4 => gauss_of_translate(resolution),
        5 => dual_laws(resolution),
        6 => hemisphere_lemma(resolution),
        7 => moebius_monotonicity(resolution),
        8 => zeta_bound(),
        9 => zeta_track(resolution),
        10 => psi_phi(resolution),
        11 => deform(resolution, start),
        12 => embedding(resolution),
        13 => covering(resolution),
        _ => Err(Error::Domain(format!("criterion {id} is not a standalone check"))),
    };
    let (passed, detail) = out.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult {
        id,
        name: NAMES.get(id as usize - 1).copied().unwrap_or("unknown").to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs all criteria; the last one checks the total wall time.
pub fn run_suite(resolution: usize) -> SuiteReport {
    run_suite_with(resolution, |_| {})
}

/// As [`run_suite`], calling `progress` after each criterion.
pub fn run_suite_with(resolution: usize, mut progress: impl FnMut(&CriterionResult)) -> SuiteReport {
    let start = Instant::now();
    let mut results = Vec::new();
    for id in 1..=13 {
        let r = run_criterion(id, resolution);
        progress(&r);
        results.push(r);
    }
    let total = start.elapsed().as_secs_f64();
    let last = CriterionResult {
        id: 14,
        name: NAMES[13].into(),
        passed: total < SUITE_BUDGET,
        detail: format!("suite took {total:.1}s (budget {SUITE_BUDGET:.0}s)"),
        seconds: total,
    };
    progress(&last);
    results.push(last);
    SuiteReport {
        resolution,
        all_passed: results.iter().all(|r| r.passed),
        results,
        total_seconds: total,
    }
}

fn calibration(res: usize, start: Instant) -> Check {
    let mut worst: f64 = 0.0;
    for r in [FRAC_PI_6, FRAC_PI_4, FRAC_PI_3, 0.45 * PI] {
        let f = Immersion::round_simple(2, r)?.with_resolution(res);
        let want = 1.0 / r.tan();
        for s in spectra(&f)? {
            for k in &s.kappas {
                worst = worst.max((k - want).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst < 1e-8 && secs < CALIBRATION_BUDGET,
        format!("max |kappa - cot r| = {worst:.2e} (tol 1e-8), {secs:.2}s (budget {CALIBRATION_BUDGET}s)"),
    ))
}

fn clifford_data(res: usize) -> Check {
    let f = Immersion::clifford(1, 1)?.with_resolution(res);
    let samples = spectra(&f)?;
    let mut worst: f64 = 0.0;
    for s in &samples {
        worst = worst.max((s.kappas[0] + 1.0).abs()).max((s.kappas[1] - 1.0).abs());
    }
    let j = interval_of_samples(&samples);
    let want = CircleInterval::from_bounds(FRAC_PI_4, 3.0 * FRAC_PI_4);
    let j_ok = j.approx_eq(&want, 1e-6);
    Ok((
        worst < 1e-8 && j_ok,
        format!(
            "max |kappa -/+ 1| = {worst:.2e} (tol 1e-8); J = [{:.9}, {:.9}] (tol 1e-6)",
            j.lo(),
            j.hi()
        ),
    ))
}

/// Largest circular distance mod π between two radius lists, minimized over
/// matchings.
pub fn radii_mismatch(a: &[f64], b: &[f64]) -> f64 {
    fn perms(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(n - 1) {
            for i in 0..=p.len() {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    perms(a.len())
        .into_iter()
        .map(|p| {
            p.iter()
                .enumerate()
                .map(|(i, &j)| circle_distance(a[i], b[j]))
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

fn shift_families(res: usize) -> Result<Vec<(&'static str, Immersion, [f64; 5], (f64, f64))>> {
    Ok(vec![
        (
            "round(pi/3)",
            Immersion::round_simple(2, FRAC_PI_3)?.with_resolution(res),
            [-0.5, 0.2, 0.7, 1.3, 2.0],
            (1.3, 0.4),
        ),
        (
            "clifford(1,1)",
            Immersion::clifford(1, 1)?.with_resolution(res),
            [0.1, 0.5, -0.3, 1.0, 2.0],
            (1.0, 0.3),
        ),
        (
            "radial-graph",
            Immersion::radial_graph(2, FRAC_PI_4, 1e-2, Profile::Mixed)?.with_resolution(res),
            [0.2, 0.5, -0.4, 1.2, 2.0],
            (0.2, 0.3),
        ),
    ])
}

fn radii_shift(res: usize) -> Check {
    let mut worst_shift: f64 = 0.0;
    let mut worst_comp: f64 = 0.0;
    for (_, f, rs, (r1, r2)) in shift_families(res)? {
        let base = spectra(&f)?;
        for r in rs {
            let fr = normal_translate(&f, r)?;
            let moved = spectra(&fr)?;
            for (b, m) in base.iter().zip(&moved) {
                let want = shifted_radii(&b.radii, r);
                worst_shift = worst_shift.max(radii_mismatch(&want, &m.radii));
            }
        }
        // f_{r+r'} = (f_r)_{(-1)^l r'}
        let l = translate_l(&base[0].radii, r1);
        let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
        let twice = normal_translate(&normal_translate(&f, r1)?, sign * r2)?;
        let once = normal_translate(&f, r1 + r2)?;
        worst_comp = worst_comp.max(pointwise_distance(&twice, &once)?);
    }
    Ok((
        worst_shift < 1e-6 && worst_comp < 1e-8,
        format!("radii shift error {worst_shift:.2e} (tol 1e-6); composition error {worst_comp:.2e} (tol 1e-8)"),
    ))
}

fn gauss_of_translate(res: usize) -> Check {
    let f = Immersion::clifford(1, 1)?.with_resolution(res);
    let samples = f.samples();
    let mut worst: f64 = 0.0;
    for r in [0.3, -0.5, 1.1] {
        let fr = normal_translate(&f, r)?;
        let errs = par_map(&samples, |cp| -> Result<f64> {
            let p = f.point(cp)?;
            let base = spectrum(&f, cp)?;
            let nu = &base.gauss;
            let nur = crate::curvature::gauss_vector(&fr, cp)?;
            let sign = if translate_l(&base.radii, r) % 2 == 0 { 1.0 } else { -1.0 };
            let (s, c) = r.sin_cos();
            Ok(p.iter()
                .zip(nu)
                .zip(&nur)
                .map(|((a, b), g)| (g - sign * (c * b - s * a)).abs())
                .fold(0.0, f64::max))
        });
        for e in errs {
            worst = worst.max(e?);
        }
    }
    Ok((
        worst < 1e-8,
        format!("max |nu_r - (-1)^l (cos r nu - sin r f)| = {worst:.2e} over {} samples (tol 1e-8)", samples.len()),
    ))
}

fn dual_laws(res: usize) -> Check {
    let fams = [
        Immersion::round_simple(2, FRAC_PI_3)?.with_resolution(res),
        Immersion::clifford(1, 1)?.with_resolution(res),
        Immersion::radial_graph(2, FRAC_PI_4, 1e-2, Profile::Mixed)?.with_resolution(res),
    ];
    let mut worst_k: f64 = 0.0;
    let mut worst_dd: f64 = 0.0;
    let mut j_ok = true;
    for f in &fams {
        let base = spectra(f)?;
        let d = dual(f)?;
        let ds = spectra(&d)?;
        for (b, s) in base.iter().zip(&ds) {
            let l = b.kappas.iter().filter(|&&k| k > 0.0).count();
            let sign = if (l + 1) % 2 == 0 { 1.0 } else { -1.0 };
            let mut want: Vec<f64> = b.kappas.iter().map(|k| sign / k).collect();
            want.sort_by(f64::total_cmp);
            for (w, g) in want.iter().zip(&s.kappas) {
                worst_k = worst_k.max((w - g).abs() / w.abs().max(g.abs()));
            }
        }
        let dd = dual(&d)?;
        let l = base[0].kappas.iter().filter(|&&k| k > 0.0).count();
        let sign = if (l + 1) % 2 == 0 { 1.0 } else { -1.0 };
        let a = dd.points()?;
        let b = f.points()?;
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.iter().zip(y) {
                worst_dd = worst_dd.max((u - sign * v).abs());
            }
        }
        let j = interval_of_samples(&base);
        let js = interval_of_samples(&ds);
        j_ok &= same_cover(&js, &j.shifted(FRAC_PI_2), 1e-6) || same_cover(&js, &j.negated().shifted(FRAC_PI_2), 1e-6);
    }
    Ok((
        worst_k < 1e-6 && worst_dd < 1e-8 && j_ok,
        format!(
            "curvature inversion rel. error {worst_k:.2e} (tol 1e-6); dual-dual error {worst_dd:.2e} (tol 1e-8); J shift {}",
            if j_ok { "ok" } else { "MISMATCH" }
        ),
    ))
}

/// Equality of radius covers. A cover of width π/2 is not unique: both
/// halves of the circle bounded by its endpoints qualify, so such covers
/// compare by their endpoint sets.
pub fn same_cover(a: &CircleInterval, b: &CircleInterval, tol: f64) -> bool {
    if a.approx_eq(b, tol) {
        return true;
    }
    a.non_unique
        && b.non_unique
        && (a.width() - b.width()).abs() <= tol
        && radii_mismatch(&[a.lo(), a.hi()], &[b.lo(), b.hi()]) <= tol
}

/// The three locally convex built-ins used by several checks.
pub fn convex_builtins(res: usize) -> Result<Vec<Immersion>> {
    Ok(vec![
        Immersion::round(2, FRAC_PI_3, random_rotation(4, 7), DomainDiffeo::Identity)?.with_resolution(res),
        Immersion::radial_graph(2, FRAC_PI_4, 1e-2, Profile::Mixed)?.with_resolution(res),
        Immersion::radial_graph(2, FRAC_PI_3, 5e-2, Profile::Quadrupole)?.with_resolution(res),
    ])
}

fn hemisphere_lemma(res: usize) -> Check {
    let mut min_locus = f64::INFINITY;
    let mut min_pair = f64::INFINITY;
    let ts = uniform_grid(0.0, FRAC_PI_2, 9);
    for f in convex_builtins(res)? {
        let c = image_circumcap(&f)?.center;
        let samples = f.samples();
        let vals = par_map(&samples, |cp| -> Result<f64> {
            let mut m = f64::INFINITY;
            for &t in &ts {
                let x = hemisphere_locus(&f, cp, t)?;
                m = m.min(crate::sphere::dot_f64(&x, c.as_slice()));
            }
            Ok(m)
        });
        for v in vals {
            min_locus = min_locus.min(v?);
        }
        let pts = f.points()?;
        let duals = dual(&f)?.points()?;
        let mins = par_map(&duals, |q| {
            pts.iter()
                .map(|p| crate::sphere::dot_f64(p, q))
                .fold(f64::INFINITY, f64::min)
        });
        min_pair = mins.into_iter().fold(min_pair, f64::min);
    }
    Ok((
        min_locus > 0.0 && min_pair >= -1e-9,
        format!("min <c, F(p,t)> = {min_locus:.3e} (> 0); min <f(p), f*(q)> = {min_pair:.3e} (>= -1e-9)"),
    ))
}

fn moebius_monotonicity(res: usize) -> Check {
    let grid = s_grid(0.2, 0.05);
    let mut all_inc = true;
    let mut min_growth = f64::INFINITY;
    for f in convex_builtins(res)? {
        let rep = moebius_flow_monitor(&f, &grid, false)?;
        all_inc &= rep.strictly_increasing;
        let first = rep.entries.first().map(|e| e.mu).unwrap_or(f64::NAN);
        let last = rep.entries.last().map(|e| e.mu).unwrap_or(f64::NAN);
        min_growth = min_growth.min(last / first);
    }
    Ok((
        all_inc && min_growth > 3.0,
        format!(
            "mu strictly increasing: {all_inc}; min mu(0.2)/mu(1) = {min_growth:.3} (> 3) over {} steps",
            grid.len()
        ),
    ))
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_tangent(rng: &mut ChaCha8Rng, q: &DVector<f64>) -> DVector<f64> {
    loop {
        let v = random_unit(rng, q.len());
        let t = &v - q * q.dot(&v);
        if t.norm() > 1e-3 {
            return t.normalize();
        }
    }
}

fn zeta_bound() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let dim = 4;
    let mut worst_fd: f64 = 0.0;
    let h = 1e-5;
    let mut count = 0;
    while count < 1000 {
        let q = random_unit(&mut rng, dim);
        if q[dim - 1].abs() > 0.95 {
            continue;
        }
        let u = random_tangent(&mut rng, &q) * rng.gen_range(0.1..2.0);
        let s: f64 = rng.gen_range(0.0..=1.0);
        let qp = SpherePoint::new(q.clone())?;
        let cf = dzeta(s, &qp, &TangentVector::new(qp.clone(), u.clone())?)?;
        let un = u.norm();
        let dir = &u / un;
        let at = |t: f64| -> Result<DVector<f64>> {
            let p = SpherePoint::new(&q * (t * un).cos() + &dir * (t * un).sin())?;
            Ok(zeta(s, &p)?.vector().clone())
        };
        let fd = (at(h)? - at(-h)?) / (2.0 * h);
        worst_fd = worst_fd.max((fd - &cf).norm() / cf.norm().max(1e-300));
        count += 1;
    }
    let mut worst_bound = f64::INFINITY;
    let mut triples = 0;
    let e = crate::sphere::e_last(dim);
    while triples < 1000 {
        let q = random_unit(&mut rng, dim);
        if q[dim - 1].abs() > 0.95 {
            continue;
        }
        let v = random_tangent(&mut rng, &q);
        let angle = v.dot(&(-&e)).clamp(-1.0, 1.0).acos();
        if angle >= FRAC_PI_2 - 1e-6 {
            continue;
        }
        let r = rng.gen_range(angle..FRAC_PI_2);
        let u = loop {
            let w = random_tangent(&mut rng, &q);
            let w = &w - &v * v.dot(&w);
            if w.norm() > 1e-3 {
                break w.normalize();
            }
        };
        let s: f64 = rng.gen_range(0.0..=1.0);
        let qp = SpherePoint::new(q.clone())?;
        let d = dzeta(s, &qp, &TangentVector::new(qp.clone(), u)?)?;
        worst_bound = worst_bound.min(d.norm() - r.cos());
        triples += 1;
    }
    Ok((
        worst_fd < 1e-6 && worst_bound >= 0.0,
        format!(
            "closed form vs finite differences rel. error {worst_fd:.2e} (tol 1e-6); min |dzeta(u)| - cos r = {worst_bound:.3e} (>= 0)"
        ),
    ))
}

/// `(Q, g)` pairs used by the Ψ/Φ checks.
pub fn twisted_pairs() -> Result<Vec<(Rotation, DomainDiffeo)>> {
    let rot3 = Rotation::plane(3, 0, 2, 0.7).compose(&Rotation::plane(3, 0, 1, -1.1));
    Ok(vec![
        (random_rotation(4, 1), DomainDiffeo::Identity),
        (random_rotation(4, 2), DomainDiffeo::rotation(&rot3)),
        (random_rotation(4, 3), DomainDiffeo::squeeze(2, 1.3)?),
        (
            random_rotation(4, 4),
            DomainDiffeo::compose(DomainDiffeo::squeeze(2, 0.8)?, DomainDiffeo::rotation(&rot3)),
        ),
        (Rotation::identity(4), DomainDiffeo::squeeze(2, 1.6)?),
    ])
}

fn zeta_track(res: usize) -> Check {
    let f = Immersion::round(2, FRAC_PI_3, random_rotation(4, 11), DomainDiffeo::Identity)?.with_resolution(res);
    let track = track_zeta(&f, &uniform_grid(0.0, 1.0, 21))?;
    let embedded = track.completed() && track.entries().all(|e| e.embedded == Some(true));
    let r = zeta_cap_radius(&f)?;
    let ratio = track
        .entries()
        .filter_map(|e| e.derivative_ratio)
        .fold(f64::INFINITY, f64::min);
    let bound_ok = ratio >= 0.95 * r.cos();
    let class = phi_hemi(&f)?;
    let target = psi(&class.rotation, &class.diffeo, FRAC_PI_2)?.with_resolution(res);
    let end = track
        .endpoint()
        .ok_or_else(|| Error::Numeric("empty zeta track".into()))?;
    let end_err = pointwise_distance(end, &target)?;
    let mut worst_class: f64 = 0.0;
    for (q, g) in twisted_pairs()? {
        let h = psi(&q, &g, FRAC_PI_2)?.with_resolution(res);
        let back = phi_hemi(&h)?;
        let want = TwistedClass::canonical(&q, &g)?;
        worst_class = worst_class.max(back.distance(&want, 2, res.min(16))?);
    }
    Ok((
        embedded && bound_ok && end_err < 1e-8 && worst_class < 1e-6,
        format!(
            "{} steps embedded: {embedded}; endpoint error {end_err:.2e} (tol 1e-8); Phi-bar Psi-bar error {worst_class:.2e} (tol 1e-6); min derivative ratio {ratio:.4} vs cos r = {:.4}",
            track.entries().count(),
            r.cos()
        ),
    ))
}

fn psi_phi(res: usize) -> Check {
    let rs = [FRAC_PI_6, FRAC_PI_4, FRAC_PI_3, 0.4, 1.2];
    let mut worst: f64 = 0.0;
    for ((q, g), r) in twisted_pairs()?.into_iter().zip(rs) {
        let f = psi(&q, &g, r)?.with_resolution(res);
        let back = phi_convex(&f)?;
        let want = TwistedClass::canonical(&q, &g)?;
        worst = worst.max(back.distance(&want, 2, res.min(16))?);
    }
    Ok((worst < 1e-6, format!("max class distance {worst:.2e} over 5 triples (tol 1e-6)")))
}

fn deform(res: usize, start: Instant) -> Check {
    let f = Immersion::radial_graph(2, FRAC_PI_4, 1e-2, Profile::Mixed)?.with_resolution(res);
    let track = deform_to_round(&f)?;
    let convex = track.entries().map(|e| e.min_k).fold(f64::INFINITY, f64::min);
    let dist = track.target.as_ref().map_or(f64::INFINITY, |t| t.endpoint_distance);
    let secs = start.elapsed().as_secs_f64();
    Ok((
        track.completed() && convex > 0.0 && dist < 1e-5 && secs < DEFORM_BUDGET,
        format!(
            "completed: {}; min kappa along track {convex:.4} (> 0); endpoint distance {dist:.2e} (tol 1e-5); {secs:.1}s (budget {DEFORM_BUDGET}s)",
            track.completed()
        ),
    ))
}

/// All-pairs multiplicity: the largest number of samples, pairwise more than
/// `delta_hops` apart in the domain, whose images lie within `eps` of one sample image.
pub fn brute_force_multiplicity(f: &Immersion, eps: f64, delta_hops: f64) -> Result<usize> {
    let pts = f.points()?;
    let samples = f.samples();
    let dom: Vec<Vec<f64>> = samples.iter().map(|cp| f.domain.point(cp)).collect();
    let mut best = 1;
    for i in 0..pts.len() {
        let near: Vec<usize> = (0..pts.len())
            .filter(|&j| {
                pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() < eps
            })
            .collect();
        let mut reps: Vec<usize> = Vec::new();
        for j in near {
            if reps
                .iter()
                .all(|&k| f.domain.hops(&dom[j], &dom[k], f.resolution) > delta_hops)
            {
                reps.push(j);
            }
        }
        best = best.max(reps.len());
    }
    Ok(best)
}

fn embedding(res: usize) -> Check {
    let params = IntersectionParams::default();
    let mut round_ok = true;
    for r in [FRAC_PI_6, FRAC_PI_4, FRAC_PI_3, 0.45 * PI] {
        let f = Immersion::round_simple(2, r)?.with_resolution(res);
        let rep = self_intersections(&f, &params)?;
        round_ok &= rep.embedded && rep.clusters.is_empty() && rep.m == 1;
    }
    let c = Immersion::clifford(2, 1)?.with_resolution(res);
    let m_c = self_intersections(&c, &params)?.m;
    let d = dual(&c)?;
    let m_d = self_intersections(&d, &params)?.m;
    let quarter = (res / 4).max(4);
    let cq = c.clone().with_resolution(quarter);
    let dq = dual(&cq)?;
    let oracle_c = brute_force_multiplicity(&cq, params.eps, params.delta_hops)?;
    let oracle_d = brute_force_multiplicity(&dq, params.eps, params.delta_hops)?;
    let det_cq = self_intersections(&cq, &params)?.m;
    let det_dq = self_intersections(&dq, &params)?.m;
    let ok = round_ok && m_c == 2 && m_d == 2 && oracle_c == m_c && oracle_d == m_d && det_cq == oracle_c && det_dq == oracle_d;
    Ok((
        ok,
        format!(
            "round family embedded: {round_ok}; m(clifford(2,1)) = {m_c}, m(dual) = {m_d}; all-pairs oracle at resolution {quarter}: {oracle_c}, {oracle_d} (detector there: {det_cq}, {det_dq})"
        ),
    ))
}

fn covering(res: usize) -> Check {
    let anti = DeckGroup::antipodal(4)?;
    let lens = DeckGroup::lens(3, 1)?;
    let equator = Immersion::round_simple(2, FRAC_PI_2)?.with_resolution(res);
    let cap = Immersion::round_simple(2, FRAC_PI_4)?.with_resolution(res);
    let small = Immersion::round_simple(2, 0.3)?.with_resolution(res);
    let cases: [(&str, &Immersion, &DeckGroup, usize, usize); 3] = [
        ("equator/antipodal", &equator, &anti, 1, 2),
        ("round(pi/4)/antipodal", &cap, &anti, 2, 1),
        ("round(0.3)/lens(3,1)", &small, &lens, 3, 1),
    ];
    let mut detail = Vec::new();
    let mut ok = true;
    for (name, f, g, k, gc) in cases {
        let rep = preimage_components(f, g, None)?;
        let good = rep.identity_holds && rep.k == k && rep.gc_order == gc;
        ok &= good;
        detail.push(format!("{name}: k={} |G_C|={} |Gamma|={}", rep.k, rep.gc_order, rep.gamma_order));
        let mb = multiplicity_bound_check(f, g)?;
        ok &= mb.hypotheses_hold && mb.bound_holds;
        detail.push(format!("m={} sym={}", mb.m, mb.symmetry_order));
    }
    let wrapped = Immersion::clifford(2, 1)?.with_resolution(res);
    let skipped = multiplicity_bound_check(&wrapped, &DeckGroup::trivial(4))?;
    ok &= !skipped.hypotheses_hold;
    detail.push(format!(
        "clifford(2,1): {}",
        if skipped.hypotheses_hold { "checked" } else { "skipped (J width pi/2)" }
    ));
    Ok((ok, detail.join("; ")))
}
