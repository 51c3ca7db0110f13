//! Constructive operators on immersions: normal translates and duals,
//! minimal enclosing caps, Möbius contractions, and the maps Ψ and Φ between
//! immersions and classes `[Q, g]` of rotations and domain diffeomorphisms.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::curvature::{circle_distance, interval_of_samples, mod_pi, spectra, CircleInterval, CurvatureSample};
use crate::error::{Error, Result};
use crate::immersion::{Ambient, ChartPoint, DomainDiffeo, Expr, Immersion};
use crate::par_map;
use crate::rigidity;
use crate::sphere::{rotation_to, Rotation, SpherePoint};

/// Default margin turning the strict inequalities of the preconditions into numeric tests.
pub const DEFAULT_MARGIN: f64 = 1e-4;

/// Count of radii `ρ` with `sin ρ sin(ρ - r) < 0`.
pub fn translate_l(radii: &[f64], r: f64) -> usize {
    radii
        .iter()
        .filter(|&&rho| rho.sin() * (rho - r).sin() < 0.0)
        .count()
}

/// Radii expected after translating by `r`: `(-1)^l (ρ - r) mod π`, sorted.
pub fn shifted_radii(radii: &[f64], r: f64) -> Vec<f64> {
    let l = translate_l(radii, r);
    let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
    let mut out: Vec<f64> = radii.iter().map(|&rho| mod_pi(sign * (rho - r))).collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Checks that `r` is at least `margin` away from every sampled principal radius.
pub fn check_translation(samples: &[CurvatureSample], r: f64, margin: f64) -> Result<()> {
    let mut worst: Option<(f64, f64, usize)> = None;
    for (i, s) in samples.iter().enumerate() {
        for &rho in &s.radii {
            let d = circle_distance(rho, r);
            if worst.map_or(true, |w| d < w.0) {
                worst = Some((d, rho, i));
            }
        }
    }
    match worst {
        Some((distance, radius, sample)) if !(distance > margin) => Err(Error::PrincipalRadiusHit {
            r,
            radius,
            distance,
            sample,
        }),
        _ => Ok(()),
    }
}

/// `f_r = cos r f + sin r ν_f`, refusing translations that hit a principal radius.
pub fn normal_translate(f: &Immersion, r: f64) -> Result<Immersion> {
    normal_translate_with_margin(f, r, DEFAULT_MARGIN)
}

pub fn normal_translate_with_margin(f: &Immersion, r: f64, margin: f64) -> Result<Immersion> {
    require_sphere(f)?;
    check_translation(&spectra(f)?, r, margin)?;
    translate_unchecked(f, r)
}

/// The translate without the principal-radius check.
pub fn translate_unchecked(f: &Immersion, r: f64) -> Result<Immersion> {
    f.derive(Expr::Translate {
        inner: Box::new(f.expr.clone()),
        r,
    })
}

fn require_sphere(f: &Immersion) -> Result<()> {
    if f.ambient() != Ambient::Sphere {
        return Err(Error::Domain("operation needs a spherical immersion".into()));
    }
    Ok(())
}

/// Checks that no sampled principal curvature is within `margin` of zero.
pub fn check_dual(samples: &[CurvatureSample], margin: f64) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        for &k in &s.kappas {
            if !(k.abs() > margin) {
                return Err(Error::FlatPoint { kappa: k, sample: i });
            }
        }
    }
    Ok(())
}

/// The dual `f★ = exp_f(π/2 ν)`, which is `ν_f` viewed as a sphere map.
pub fn dual(f: &Immersion) -> Result<Immersion> {
    dual_with_margin(f, DEFAULT_MARGIN)
}

pub fn dual_with_margin(f: &Immersion, margin: f64) -> Result<Immersion> {
    require_sphere(f)?;
    check_dual(&spectra(f)?, margin)?;
    translate_unchecked(f, FRAC_PI_2)
}

/// `F(p, t) = cos t f(p) + sin t f★(p)`.
pub fn hemisphere_locus(f: &Immersion, cp: &ChartPoint, t: f64) -> Result<Vec<f64>> {
    let p = f.point(cp)?;
    let nu = crate::curvature::gauss_vector(f, cp)?;
    let (s, c) = t.sin_cos();
    Ok(p.iter().zip(&nu).map(|(a, b)| c * a + s * b).collect())
}

/// Minimal enclosing spherical cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circumcap {
    pub center: SpherePoint,
    pub radius: f64,
}

#[derive(Debug, Clone)]
struct Ball {
    center: Vec<f64>,
    r2: f64,
}

impl Ball {
    fn contains(&self, p: &[f64]) -> bool {
        dist2(&self.center, p) <= self.r2 * (1.0 + 1e-12) + 1e-15
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Smallest ball with all `support` points on its boundary (circumsphere in
/// their affine hull).
fn ball_through(support: &[Vec<f64>], dim: usize) -> Option<Ball> {
    match support.len() {
        0 => Some(Ball {
            center: vec![0.0; dim],
            r2: -1.0,
        }),
        1 => Some(Ball {
            center: support[0].clone(),
            r2: 0.0,
        }),
        k => {
            let p0 = &support[0];
            let diffs: Vec<Vec<f64>> = support[1..]
                .iter()
                .map(|p| p.iter().zip(p0).map(|(a, b)| a - b).collect())
                .collect();
            let m = k - 1;
            let a = DMatrix::from_fn(m, m, |i, j| {
                2.0 * diffs[i].iter().zip(&diffs[j]).map(|(x, y)| x * y).sum::<f64>()
            });
            let b = DVector::from_fn(m, |i, _| diffs[i].iter().map(|x| x * x).sum::<f64>());
            let lambda = a.lu().solve(&b)?;
            let mut center = p0.clone();
            for (l, d) in lambda.iter().zip(&diffs) {
                for (c, x) in center.iter_mut().zip(d) {
                    *c += l * x;
                }
            }
            let r2 = dist2(&center, p0);
            r2.is_finite().then_some(Ball { center, r2 })
        }
    }
}

/// Move-to-front Welzl recursion on a small point set.
fn welzl(points: &mut Vec<Vec<f64>>, end: usize, support: &mut Vec<Vec<f64>>, dim: usize) -> Ball {
    let mut ball = ball_through(support, dim).unwrap_or(Ball {
        center: vec![0.0; dim],
        r2: f64::INFINITY,
    });
    if support.len() == dim + 1 {
        return ball;
    }
    let mut i = 0;
    while i < end {
        if !ball.contains(&points[i]) {
            support.push(points[i].clone());
            ball = welzl(points, i, support, dim);
            support.pop();
            let p = points.remove(i);
            points.insert(0, p);
        }
        i += 1;
    }
    ball
}

/// Minimal enclosing Euclidean ball by an active set of farthest points,
/// each round solved exactly; returns `(center, radius)`.
pub fn minimal_ball(points: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    if points.is_empty() {
        return Err(Error::Domain("no points".into()));
    }
    let dim = points[0].len();
    let far = |c: &[f64]| -> (usize, f64) {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, dist2(c, p)))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc })
    };
    let first = far(&points[0]).0;
    let mut active = vec![points[0].clone(), points[first].clone()];
    let mut last_r2 = -1.0;
    for _ in 0..1000 {
        let mut work = active.clone();
        let len = work.len();
        let ball = welzl(&mut work, len, &mut Vec::new(), dim);
        let (idx, d2) = far(&ball.center);
        if d2 <= ball.r2 * (1.0 + 1e-12) + 1e-15 || (ball.r2 - last_r2).abs() <= 1e-8 * 1e-8 {
            return Ok((ball.center, d2.max(ball.r2).sqrt()));
        }
        last_r2 = ball.r2;
        active.push(points[idx].clone());
    }
    Err(Error::Numeric("minimal ball iteration did not converge".into()))
}

/// Minimal enclosing cap of points in an open hemisphere.
pub fn circumcenter(points: &[Vec<f64>]) -> Result<Circumcap> {
    let (center, _) = minimal_ball(points)?;
    let norm = center.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(Error::NotHemispherical {
            radius: FRAC_PI_2,
        });
    }
    let center = SpherePoint::from_slice(&center)?;
    let c = center.vector();
    let radius = points
        .iter()
        .map(|p| crate::sphere::angle_between(c, &DVector::from_column_slice(p)))
        .fold(0.0, f64::max);
    if radius >= FRAC_PI_2 - 1e-6 {
        return Err(Error::NotHemispherical { radius });
    }
    Ok(Circumcap { center, radius })
}

/// Circumcap of the sampled image of `f`.
pub fn image_circumcap(f: &Immersion) -> Result<Circumcap> {
    circumcenter(&f.points()?)
}

/// `M_s ∘ f` contracting toward `c`.
pub fn apply_moebius(f: &Immersion, c: &SpherePoint, s: f64) -> Result<Immersion> {
    require_sphere(f)?;
    f.derive(Expr::Moebius {
        inner: Box::new(f.expr.clone()),
        center: c.clone(),
        s,
    })
}

/// One entry of a flow monitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorEntry {
    pub s: f64,
    pub mu: f64,
    #[serde(rename = "J")]
    pub j_interval: CircleInterval,
    pub embedded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoebiusReport {
    pub center: SpherePoint,
    pub entries: Vec<MonitorEntry>,
    pub strictly_increasing: bool,
}

/// Checks that `f` has all principal curvatures above `margin`.
pub fn require_convex(samples: &[CurvatureSample], margin: f64) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        if !(s.min_kappa() > margin) {
            return Err(Error::NotConvex {
                kappa: s.min_kappa(),
                sample: i,
            });
        }
    }
    Ok(())
}

/// Minimum principal curvature `μ(s)` of `M_s ∘ f` along a grid of `s` values
/// (toward the circumcenter of `f`), with strict-increase check as `s` decreases.
pub fn moebius_flow_monitor(f: &Immersion, s_grid: &[f64], with_embedding: bool) -> Result<MoebiusReport> {
    let base = spectra(f)?;
    require_convex(&base, 0.0)?;
    let cap = image_circumcap(f)?;
    let mut grid = s_grid.to_vec();
    grid.sort_by(|a, b| b.total_cmp(a));
    let mut entries = Vec::with_capacity(grid.len());
    for &s in &grid {
        let g = apply_moebius(f, &cap.center, s)?;
        let samples = spectra(&g)?;
        let mu = samples.iter().map(|c| c.min_kappa()).fold(f64::INFINITY, f64::min);
        let embedded = if with_embedding {
            rigidity::self_intersections(&g, &rigidity::IntersectionParams::default())?.embedded
        } else {
            true
        };
        entries.push(MonitorEntry {
            s,
            mu,
            j_interval: interval_of_samples(&samples),
            embedded,
        });
    }
    let strictly_increasing = entries.windows(2).all(|w| w[1].mu > w[0].mu);
    Ok(MoebiusReport {
        center: cap.center,
        entries,
        strictly_increasing,
    })
}

/// Uniform grid `1, 1 - step, …` down to `s_min`.
pub fn s_grid(s_min: f64, step: f64) -> Vec<f64> {
    let count = ((1.0 - s_min) / step).round() as usize;
    (0..=count).map(|i| 1.0 - step * i as f64).collect()
}

/// `Ψ_r[Q, g] = Q ∘ ι_r ∘ g`.
pub fn psi(q: &Rotation, g: &DomainDiffeo, r: f64) -> Result<Immersion> {
    let n = q.dim() - 2;
    Immersion::round(n, r, q.clone(), g.clone())
}

/// A pair `(Q, g)` standing for its class `[Q, g] = [QP, P⁻¹g]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwistedClass {
    pub rotation: Rotation,
    pub diffeo: DomainDiffeo,
    pub canonical: bool,
}

impl TwistedClass {
    /// Representative with `Q = rotation_to(Q(-e_{n+2}))`.
    pub fn canonical(q: &Rotation, g: &DomainDiffeo) -> Result<TwistedClass> {
        let m = q.dim();
        let c = q.apply(&SpherePoint::pole(m, false));
        let qc = rotation_to(&c);
        let p = qc.inverse().compose(q);
        let block = p.matrix().view((0, 0), (m - 1, m - 1)).into_owned();
        let drift = (p.matrix()[(m - 1, m - 1)] - 1.0).abs();
        if drift > 1e-9 {
            return Err(Error::Numeric(format!(
                "block part does not fix the pole (deviation {drift:.3e})"
            )));
        }
        let lin = DomainDiffeo::linear(block)?;
        Ok(TwistedClass {
            rotation: qc,
            diffeo: DomainDiffeo::compose(lin, g.clone()),
            canonical: true,
        })
    }

    pub fn canonicalized(&self) -> Result<TwistedClass> {
        if self.canonical {
            Ok(self.clone())
        } else {
            TwistedClass::canonical(&self.rotation, &self.diffeo)
        }
    }

    /// Largest discrepancy between two canonical classes: rotation entries
    /// and diffeo values on the sample grid of `f`'s domain.
    pub fn distance(&self, other: &TwistedClass, n: usize, res: usize) -> Result<f64> {
        let a = self.canonicalized()?;
        let b = other.canonicalized()?;
        let domain = crate::immersion::Domain::sphere(n);
        let samples = domain.samples(res);
        let diffs = par_map(&samples, |cp| {
            let ga = a.diffeo.apply_chart(domain, cp);
            let gb = b.diffeo.apply_chart(domain, cp);
            ga.iter().zip(&gb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        });
        let dg = diffs.into_iter().fold(0.0, f64::max);
        Ok(dg.max(a.rotation.distance(&b.rotation)))
    }

    /// Smallest orientation sign of the diffeo over a sample grid.
    pub fn min_orientation(&self, n: usize, res: usize) -> f64 {
        let domain = crate::immersion::Domain::sphere(n);
        let samples = domain.samples(res);
        par_map(&samples, |cp| self.diffeo.orientation_at(domain, cp))
            .into_iter()
            .fold(1.0, f64::min)
    }
}

fn require_sphere_domain(f: &Immersion) -> Result<usize> {
    match f.domain {
        crate::immersion::Domain::Sphere { n } => Ok(n),
        _ => Err(Error::Domain("operation needs a sphere domain".into())),
    }
}

/// Φ for locally convex hemispherical `f`: `Q_f` centers the image cap and
/// `g_f` is the Euclidean Gauss map of `π ∘ Q_f⁻¹ ∘ f`.
pub fn phi_convex(f: &Immersion) -> Result<TwistedClass> {
    require_sphere(f)?;
    require_sphere_domain(f)?;
    require_convex(&spectra(f)?, 0.0)?;
    let cap = image_circumcap(f)?;
    let q = rotation_to(&cap.center);
    let centered = Expr::Rotate {
        rotation: q.inverse(),
        inner: Box::new(f.expr.clone()),
    };
    let phi = Expr::CentralProjection {
        inner: Box::new(centered),
    };
    Ok(TwistedClass {
        rotation: q,
        diffeo: DomainDiffeo::EuclideanGauss { map: Box::new(phi) },
        canonical: true,
    })
}

/// Circumcap of the sampled Gauss image (the image of the dual).
pub fn gauss_image_cap(f: &Immersion) -> Result<Circumcap> {
    let samples = f.samples();
    let normals = par_map(&samples, |cp| crate::curvature::gauss_vector(f, cp));
    let normals = normals
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| crate::curvature::with_sample(e, i)))
        .collect::<Result<Vec<_>>>()?;
    circumcenter(&normals)
}

/// Φ̄ for `f` with hemispherical Gauss image: `Q_f` centers the dual's image
/// and `g_f = τ ∘ Q_f⁻¹ ∘ f`.
pub fn phi_hemi(f: &Immersion) -> Result<TwistedClass> {
    require_sphere(f)?;
    require_sphere_domain(f)?;
    let cap = gauss_image_cap(f)?;
    let q = rotation_to(&cap.center);
    let centered = Expr::Rotate {
        rotation: q.inverse(),
        inner: Box::new(f.expr.clone()),
    };
    Ok(TwistedClass {
        rotation: q,
        diffeo: DomainDiffeo::Equatorial {
            map: Box::new(centered),
        },
        canonical: true,
    })
}

/// Largest pointwise distance between two immersions over `a`'s samples.
pub fn pointwise_distance(a: &Immersion, b: &Immersion) -> Result<f64> {
    let samples = a.samples();
    let d = par_map(&samples, |cp| -> Result<f64> {
        let x = a.point(cp)?;
        let y = b.point(cp)?;
        Ok(x.iter().zip(&y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt())
    });
    d.into_iter().try_fold(0.0, |acc, r| Ok(f64::max(acc, r?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::immersion::Profile;
    use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, FRAC_PI_6};

    #[test]
    fn circumcap_examples() {
        let single = circumcenter(&[vec![0.0, 1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(single.radius, 0.0);
        let f = Immersion::round_simple(2, 0.6).unwrap().with_resolution(8);
        let cap = image_circumcap(&f).unwrap();
        assert!((cap.radius - 0.6).abs() < 1e-6);
        assert!((cap.center.as_slice()[3] + 1.0).abs() < 1e-9);
        let alpha: f64 = 0.4;
        let a = vec![alpha.cos(), alpha.sin(), 0.0, 0.0];
        let b = vec![alpha.cos(), -alpha.sin(), 0.0, 0.0];
        let cap = circumcenter(&[a, b]).unwrap();
        assert!((cap.radius - alpha).abs() < 1e-12);
        assert!((cap.center.as_slice()[0] - 1.0).abs() < 1e-12);
        let eq = Immersion::round_simple(2, FRAC_PI_2).unwrap().with_resolution(4);
        assert!(matches!(image_circumcap(&eq), Err(Error::NotHemispherical { .. })));
    }

    #[test]
    fn translate_of_round_is_round() {
        let r = 1.1;
        let rho = 0.4;
        let f = Immersion::round_simple(2, r).unwrap().with_resolution(5);
        let g = normal_translate(&f, rho).unwrap();
        let h = Immersion::round_simple(2, r - rho).unwrap().with_resolution(5);
        assert!(pointwise_distance(&g, &h).unwrap() < 1e-10);
    }

    #[test]
    fn clifford_translate_hits_radius() {
        let f = Immersion::clifford(1, 1).unwrap().with_resolution(8);
        assert!(matches!(
            normal_translate(&f, FRAC_PI_4),
            Err(Error::PrincipalRadiusHit { .. })
        ));
        assert!(normal_translate(&f, 0.3).is_ok());
    }

    #[test]
    fn dual_of_round_and_flat_error() {
        let f = Immersion::round_simple(2, FRAC_PI_6).unwrap().with_resolution(4);
        let d = dual(&f).unwrap();
        let s = spectra(&d).unwrap();
        for c in &s {
            for rho in &c.radii {
                let a = circle_distance(*rho, FRAC_PI_2 - FRAC_PI_6);
                let b = circle_distance(*rho, FRAC_PI_2 + FRAC_PI_6);
                assert!(a.min(b) < 1e-9);
            }
        }
        let eq = Immersion::round_simple(2, FRAC_PI_2).unwrap().with_resolution(4);
        assert!(matches!(dual(&eq), Err(Error::FlatPoint { .. })));
    }

    #[test]
    fn psi_phi_round_trip_small() {
        let q = Rotation::plane(4, 0, 3, 0.5).compose(&Rotation::plane(4, 1, 2, 0.3));
        let g = DomainDiffeo::squeeze(2, 0.6).unwrap();
        let f = psi(&q, &g, FRAC_PI_3).unwrap().with_resolution(8);
        let class = phi_convex(&f).unwrap();
        let expect = TwistedClass::canonical(&q, &g).unwrap();
        assert!(class.distance(&expect, 2, 6).unwrap() < 1e-6);
        assert_eq!(class.min_orientation(2, 4), 1.0);
    }

    #[test]
    fn phi_hemi_of_round_family() {
        let q = Rotation::plane(4, 2, 3, 0.7);
        let f = Immersion::round(2, 1.0, q.clone(), DomainDiffeo::Identity)
            .unwrap()
            .with_resolution(8);
        let class = phi_hemi(&f).unwrap();
        let c = q.apply(&SpherePoint::pole(4, false));
        let qf = rotation_to(&c);
        assert!(class.rotation.distance(&qf) < 1e-9);
        let expect = TwistedClass::canonical(&q, &DomainDiffeo::Identity).unwrap();
        assert!(class.distance(&expect, 2, 5).unwrap() < 1e-8);
    }

    #[test]
    fn moebius_monitor_round() {
        let f = Immersion::round_simple(2, FRAC_PI_4).unwrap().with_resolution(6);
        let rep = moebius_flow_monitor(&f, &s_grid(0.2, 0.2), false).unwrap();
        assert!(rep.strictly_increasing);
        assert!((rep.entries[0].mu - 1.0).abs() < 1e-9);
        let g = Immersion::radial_graph(2, FRAC_PI_4, 1e-2, Profile::Mixed)
            .unwrap()
            .with_resolution(6);
        assert!(moebius_flow_monitor(&g, &s_grid(0.2, 0.2), false)
            .unwrap()
            .strictly_increasing);
    }
}
