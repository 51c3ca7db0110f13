//! Gauss map, fundamental forms, principal curvatures and radii, and the
//! smallest circular interval `J(f)` containing all principal radii.
//!
//! Sign conventions: the Gauss vector makes `(df(u_1), …, df(u_n), ν, f)`
//! positively oriented in ℝ^{n+2} for a positive frame `(u_i)` of the domain
//! (`(df(u_1), …, df(u_n), ν)` in Euclidean space), and principal
//! curvatures are eigenvalues of `-dν = κ df`. With these choices
//! `ι_r(p) = sin r p - cos r e_{n+2}` has `κ ≡ cot r` and the Euclidean
//! sphere `p ↦ tan r p` has `κ ≡ -cot r`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::immersion::{gauss_generic, singular_ratio, Ambient, ChartPoint, Immersion, RANK_TOLERANCE};
use crate::jet::Jet;
use crate::par_map;

/// Radii closer than this are treated as equal when breaking ties.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Curvature data of an immersion at one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSample {
    pub chart: ChartPoint,
    pub point: Vec<f64>,
    pub gauss: Vec<f64>,
    /// Ascending principal curvatures.
    pub kappas: Vec<f64>,
    /// `ρ_i ∈ (0, π)` with `cot ρ_i = κ_i`.
    pub radii: Vec<f64>,
    /// `df(u_i)` for principal directions orthonormal in the induced metric.
    pub directions: Vec<Vec<f64>>,
    /// Number of positive principal curvatures.
    pub l_count: usize,
}

impl CurvatureSample {
    pub fn min_kappa(&self) -> f64 {
        self.kappas[0]
    }

    pub fn max_kappa(&self) -> f64 {
        *self.kappas.last().expect("at least one curvature")
    }

    /// True when two principal curvatures coincide within `1e-9`.
    pub fn is_umbilic(&self) -> bool {
        self.kappas.windows(2).any(|w| (w[1] - w[0]).abs() < 1e-9)
    }
}

/// Principal radius with `cot ρ = κ`, in `(0, π)`.
pub fn radius_of(kappa: f64) -> f64 {
    1.0f64.atan2(kappa)
}

/// Representative of `a` mod π in `[0, π)`.
pub fn mod_pi(a: f64) -> f64 {
    let r = a.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Distance between two classes mod π.
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let d = mod_pi(a - b);
    d.min(PI - d)
}

/// Gauss vector of `f` at a chart point.
pub fn gauss_vector(f: &Immersion, cp: &ChartPoint) -> Result<Vec<f64>> {
    let local = f.local(cp)?;
    check_rank(&local.jac, cp)?;
    Ok(gauss_generic(&local.point, &local.jac, f.ambient(), local.orient))
}

fn check_rank(cols: &[Vec<f64>], cp: &ChartPoint) -> Result<()> {
    let ratio = singular_ratio(cols);
    if !(ratio >= RANK_TOLERANCE) {
        return Err(Error::Degenerate {
            sample: 0,
            detail: format!(
                "jacobian singular value ratio {ratio:.3e} at chart {} params {:?}",
                cp.chart,
                cp.params()
            ),
        });
    }
    Ok(())
}

/// Closed-form eigen-decomposition of a symmetric 2×2 matrix, ascending.
fn sym2_eigen(a: f64, b: f64, d: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let rad = half.hypot(b);
    let lo = mean - rad;
    let hi = mean + rad;
    // eigenvector for `hi`, built from the better-conditioned row
    let v_hi = if rad == 0.0 {
        [1.0, 0.0]
    } else if half >= 0.0 {
        let v = [half + rad, b];
        let n = v[0].hypot(v[1]);
        [v[0] / n, v[1] / n]
    } else {
        let v = [b, rad - half];
        let n = v[0].hypot(v[1]);
        [v[0] / n, v[1] / n]
    };
    let v_lo = [-v_hi[1], v_hi[0]];
    ([lo, hi], [v_lo, v_hi])
}

fn spectrum_from_local(
    point: &[f64],
    jac: &[Vec<f64>],
    hess: &[Vec<Vec<f64>>],
    orient: f64,
    ambient: Ambient,
    cp: &ChartPoint,
) -> Result<CurvatureSample> {
    check_rank(jac, cp)?;
    let n = jac.len();
    let nu = gauss_generic(point, jac, ambient, orient);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let first = DMatrix::from_fn(n, n, |i, j| dot(&jac[i], &jac[j]));
    let second = DMatrix::from_fn(n, n, |i, j| 0.5 * (dot(&nu, &hess[i][j]) + dot(&nu, &hess[j][i])));
    let chol = first.clone().cholesky().ok_or_else(|| {
        Error::Numeric(format!(
            "first fundamental form not positive definite at chart {} params {:?}",
            cp.chart,
            cp.params()
        ))
    })?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
    let a = &linv * &second * linv.transpose();
    let (kappas, vecs): (Vec<f64>, Vec<Vec<f64>>) = if n == 2 {
        let (vals, v) = sym2_eigen(a[(0, 0)], 0.5 * (a[(0, 1)] + a[(1, 0)]), a[(1, 1)]);
        (vals.to_vec(), v.iter().map(|x| x.to_vec()).collect())
    } else {
        let sym = 0.5 * (&a + a.transpose());
        let eig = SymmetricEigen::new(sym);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        (
            idx.iter().map(|&i| eig.eigenvalues[i]).collect(),
            idx.iter()
                .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
                .collect(),
        )
    };
    if kappas.iter().any(|k| !k.is_finite()) {
        return Err(Error::Numeric(format!(
            "eigen-solver failure (condition of first form {:.3e})",
            first.norm() * first.clone().try_inverse().map_or(f64::INFINITY, |m| m.norm())
        )));
    }
    let linv_t = linv.transpose();
    let directions = vecs
        .iter()
        .map(|v| {
            let u: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|k| linv_t[(i, k)] * v[k]).sum())
                .collect();
            (0..point.len())
                .map(|row| (0..n).map(|i| u[i] * jac[i][row]).sum())
                .collect()
        })
        .collect();
    Ok(CurvatureSample {
        chart: *cp,
        point: point.to_vec(),
        gauss: nu,
        radii: kappas.iter().map(|&k| radius_of(k)).collect(),
        l_count: kappas.iter().filter(|&&k| k > 0.0).count(),
        kappas,
        directions,
    })
}

/// Principal curvatures of a spherical immersion at a chart point.
pub fn shape_spectrum(f: &Immersion, cp: &ChartPoint) -> Result<CurvatureSample> {
    if f.ambient() != Ambient::Sphere {
        return Err(Error::Domain("shape_spectrum needs a spherical immersion".into()));
    }
    let l = f.local(cp)?;
    spectrum_from_local(&l.point, &l.jac, &l.hess, l.orient, Ambient::Sphere, cp)
}

/// Principal curvatures of a Euclidean immersion at a chart point.
pub fn euclidean_shape_spectrum(f: &Immersion, cp: &ChartPoint) -> Result<CurvatureSample> {
    if f.ambient() != Ambient::Euclidean {
        return Err(Error::Domain(
            "euclidean_shape_spectrum needs a Euclidean immersion".into(),
        ));
    }
    let l = f.local(cp)?;
    spectrum_from_local(&l.point, &l.jac, &l.hess, l.orient, Ambient::Euclidean, cp)
}

/// Curvature at a chart point for either ambient.
pub fn spectrum(f: &Immersion, cp: &ChartPoint) -> Result<CurvatureSample> {
    let l = f.local(cp)?;
    spectrum_from_local(&l.point, &l.jac, &l.hess, l.orient, f.ambient(), cp)
}

/// Curvature at every sample of `f`, in sample order.
pub fn spectra(f: &Immersion) -> Result<Vec<CurvatureSample>> {
    spectra_at(f, &f.samples())
}

/// Curvature at the given chart points; errors name the failing index.
pub fn spectra_at(f: &Immersion, samples: &[ChartPoint]) -> Result<Vec<CurvatureSample>> {
    let out = par_map(samples, |cp| spectrum(f, cp));
    out.into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| with_sample(e, i)))
        .collect()
}

pub(crate) fn with_sample(e: Error, i: usize) -> Error {
    match e {
        Error::Degenerate { detail, .. } => Error::Degenerate { sample: i, detail },
        Error::Numeric(detail) => Error::Degenerate { sample: i, detail },
        other => other,
    }
}

/// A closed interval of ℝ mod π.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleInterval {
    /// Midpoint in `[0, π)`.
    pub mid: f64,
    pub half_width: f64,
    /// Set when another cover of the same width exists (width ≥ π/2).
    #[serde(default)]
    pub non_unique: bool,
}

impl CircleInterval {
    pub fn point(a: f64) -> CircleInterval {
        CircleInterval {
            mid: mod_pi(a),
            half_width: 0.0,
            non_unique: false,
        }
    }

    pub fn from_bounds(lo: f64, hi: f64) -> CircleInterval {
        let width = (hi - lo).clamp(0.0, PI);
        CircleInterval {
            mid: mod_pi(lo + 0.5 * width),
            half_width: 0.5 * width,
            non_unique: false,
        }
    }

    pub fn width(&self) -> f64 {
        2.0 * self.half_width
    }

    /// Lower end, as a real number in `[mid - π/2, mid)`.
    pub fn lo(&self) -> f64 {
        self.mid - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.mid + self.half_width
    }

    /// Whether `a` mod π lies in the interval enlarged by `tol`.
    pub fn contains(&self, a: f64, tol: f64) -> bool {
        circle_distance(a, self.mid) <= self.half_width + tol
    }

    /// Circle distance from `a` to the interval (zero inside).
    pub fn distance_to(&self, a: f64) -> f64 {
        (circle_distance(a, self.mid) - self.half_width).max(0.0)
    }

    /// The interval translated by `t`.
    pub fn shifted(&self, t: f64) -> CircleInterval {
        CircleInterval {
            mid: mod_pi(self.mid + t),
            ..*self
        }
    }

    /// The image under `ρ ↦ -ρ`.
    pub fn negated(&self) -> CircleInterval {
        CircleInterval {
            mid: mod_pi(-self.mid),
            ..*self
        }
    }

    /// Whether two intervals agree as sets mod π within `tol`.
    pub fn approx_eq(&self, other: &CircleInterval, tol: f64) -> bool {
        (self.half_width - other.half_width).abs() <= tol
            && (circle_distance(self.mid, other.mid) <= tol
                || (self.half_width >= FRAC_PI_2 - tol && other.half_width >= FRAC_PI_2 - tol))
    }
}

/// Smallest circular interval mod π containing all given radii.
///
/// The cover is the complement of the largest gap between consecutive radii
/// on the circle of length π. When several gaps tie within
/// [`TIE_TOLERANCE`] the cover avoiding `0 mod π` is preferred, then the one
/// with the smallest midpoint; `non_unique` is set when the width reaches π/2.
pub fn interval_of(radii: &[f64]) -> CircleInterval {
    let mut r: Vec<f64> = radii.iter().map(|&a| mod_pi(a)).collect();
    if r.is_empty() {
        return CircleInterval::point(0.0);
    }
    r.sort_by(f64::total_cmp);
    let m = r.len();
    let gaps: Vec<(f64, usize)> = (0..m)
        .map(|i| {
            // gap after r[i]
            let next = if i + 1 < m { r[i + 1] } else { r[0] + PI };
            (next - r[i], i)
        })
        .collect();
    let max_gap = gaps.iter().map(|g| g.0).fold(0.0, f64::max);
    let mut best: Option<(bool, f64, CircleInterval)> = None;
    for &(gap, i) in &gaps {
        if gap < max_gap - TIE_TOLERANCE {
            continue;
        }
        let start = r[(i + 1) % m];
        let width = PI - gap;
        let iv = CircleInterval {
            mid: mod_pi(start + 0.5 * width),
            half_width: 0.5 * width.max(0.0),
            non_unique: false,
        };
        let has_zero = iv.contains(0.0, 0.0);
        let key = (has_zero, iv.mid);
        let better = match &best {
            None => true,
            Some((z, mid, _)) => (key.0, key.1) < (*z, *mid),
        };
        if better {
            best = Some((has_zero, iv.mid, iv));
        }
    }
    let mut iv = best.expect("at least one gap").2;
    if iv.width() >= FRAC_PI_2 - TIE_TOLERANCE {
        iv.non_unique = true;
    }
    iv
}

/// `J(f)` over the sampled domain.
pub fn radii_interval(f: &Immersion) -> Result<CircleInterval> {
    let s = spectra(f)?;
    Ok(interval_of_samples(&s))
}

pub fn interval_of_samples(samples: &[CurvatureSample]) -> CircleInterval {
    let radii: Vec<f64> = samples.iter().flat_map(|s| s.radii.iter().copied()).collect();
    interval_of(&radii)
}

/// Which curvature hypotheses hold for a sampled immersion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypotheses {
    pub interval: CircleInterval,
    pub width_lt_half_pi: bool,
    pub contains_zero: bool,
    pub contains_half_pi: bool,
    pub locally_convex: bool,
    /// `J ∩ (J + π/2) = ∅`.
    pub disjoint_from_quarter_shift: bool,
    pub l_constant: bool,
    pub l_count: usize,
    pub min_kappa: f64,
    pub max_kappa: f64,
}

/// Hypothesis report from precomputed samples; strict inequalities use `margin`.
pub fn classify_samples(samples: &[CurvatureSample], margin: f64) -> Hypotheses {
    let iv = interval_of_samples(samples);
    let min_kappa = samples.iter().map(|s| s.min_kappa()).fold(f64::INFINITY, f64::min);
    let max_kappa = samples
        .iter()
        .map(|s| s.max_kappa())
        .fold(f64::NEG_INFINITY, f64::max);
    let l0 = samples.first().map_or(0, |s| s.l_count);
    let width_lt = iv.width() < FRAC_PI_2 - margin;
    Hypotheses {
        interval: iv,
        width_lt_half_pi: width_lt,
        contains_zero: iv.contains(0.0, margin),
        contains_half_pi: iv.contains(FRAC_PI_2, margin),
        locally_convex: min_kappa > margin,
        disjoint_from_quarter_shift: width_lt,
        l_constant: samples.iter().all(|s| s.l_count == l0),
        l_count: l0,
        min_kappa,
        max_kappa,
    }
}

pub fn classify(f: &Immersion) -> Result<Hypotheses> {
    Ok(classify_samples(&spectra(f)?, 1e-9))
}

/// Intrinsic Gaussian curvature of a surface from its metric alone.
pub fn sectional_curvature(f: &Immersion, cp: &ChartPoint) -> Result<f64> {
    if f.dim() != 2 {
        return Err(Error::Domain("sectional curvature check needs n = 2".into()));
    }
    let jets = f.jets(cp, 3);
    let fu: Vec<Jet> = jets.iter().map(|j| j.partial(0)).collect();
    let fv: Vec<Jet> = jets.iter().map(|j| j.partial(1)).collect();
    let inner = |a: &[Jet], b: &[Jet]| crate::jet::dot(a, b);
    let e = inner(&fu, &fu);
    let ff = inner(&fu, &fv);
    let g = inner(&fv, &fv);
    let (e0, f0, g0) = (e.value(), ff.value(), g.value());
    let e_u = e.d1(0);
    let e_v = e.d1(1);
    let f_u = ff.d1(0);
    let f_v = ff.d1(1);
    let g_u = g.d1(0);
    let g_v = g.d1(1);
    let e_vv = e.d2(1, 1);
    let f_uv = ff.d2(0, 1);
    let g_uu = g.d2(0, 0);
    let d3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let a = d3([
        [-0.5 * e_vv + f_uv - 0.5 * g_uu, 0.5 * e_u, f_u - 0.5 * e_v],
        [f_v - 0.5 * g_u, e0, f0],
        [0.5 * g_v, f0, g0],
    ]);
    let b = d3([
        [0.0, 0.5 * e_v, 0.5 * g_u],
        [0.5 * e_v, e0, f0],
        [0.5 * g_u, f0, g0],
    ]);
    let det = e0 * g0 - f0 * f0;
    Ok((a - b) / (det * det))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::immersion::{DomainDiffeo, Profile};
    use crate::sphere::Rotation;
    use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, FRAC_PI_6};

    #[test]
    fn round_calibration() {
        for r in [FRAC_PI_6, FRAC_PI_4, FRAC_PI_3, 0.45 * PI] {
            let f = Immersion::round_simple(2, r).unwrap().with_resolution(5);
            for s in spectra(&f).unwrap() {
                for k in &s.kappas {
                    assert!((k - 1.0 / r.tan()).abs() < 1e-8);
                }
                let p: Vec<f64> = s.point.clone();
                // ν = -(cos r p̂ - sin r ...) written in ambient terms
                let phat: Vec<f64> = p[..3].iter().map(|x| x / r.sin()).collect();
                let expect = [
                    -r.cos() * phat[0],
                    -r.cos() * phat[1],
                    -r.cos() * phat[2],
                    -r.sin(),
                ];
                for (a, b) in s.gauss.iter().zip(expect) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn clifford_curvatures_and_interval() {
        let f = Immersion::clifford(1, 1).unwrap().with_resolution(16);
        let s = spectra(&f).unwrap();
        for c in &s {
            assert!((c.kappas[0] + 1.0).abs() < 1e-8 && (c.kappas[1] - 1.0).abs() < 1e-8);
        }
        let iv = interval_of_samples(&s);
        assert!((iv.lo() - FRAC_PI_4).abs() < 1e-6, "{iv:?}");
        assert!((iv.hi() - 3.0 * FRAC_PI_4).abs() < 1e-6);
        assert!(iv.non_unique);
        let h = classify_samples(&s, 1e-9);
        assert!(!h.width_lt_half_pi && !h.contains_zero && h.contains_half_pi);
    }

    #[test]
    fn euclidean_sphere_has_negative_curvature() {
        let r = 0.8;
        let f = Immersion::new(crate::immersion::Expr::EuclideanRound {
            n: 2,
            r,
            diffeo: DomainDiffeo::Identity,
        })
        .unwrap()
        .with_resolution(4);
        for cp in f.samples() {
            let s = euclidean_shape_spectrum(&f, &cp).unwrap();
            for k in &s.kappas {
                assert!((k + 1.0 / r.tan()).abs() < 1e-10);
            }
            let p = f.domain_point(&cp);
            for (a, b) in s.gauss.iter().zip(&p) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let g = Immersion::round_simple(2, r).unwrap();
        assert!(euclidean_shape_spectrum(&g, &ChartPoint::new(0, &[0.0, 0.0])).is_err());
    }

    #[test]
    fn rotation_and_reparametrization_invariance() {
        let q = Rotation::plane(4, 0, 3, 0.4).compose(&Rotation::plane(4, 1, 2, 1.1));
        let f = Immersion::radial_graph(2, 0.8, 0.02, Profile::Mixed)
            .unwrap()
            .with_resolution(6);
        let g = f.postcompose_rotation(q.clone()).unwrap();
        let a = spectra(&f).unwrap();
        let b = spectra(&g).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (k1, k2) in x.kappas.iter().zip(&y.kappas) {
                assert!((k1 - k2).abs() < 1e-10);
            }
            let qn = q.apply_vec(&nalgebra::DVector::from_vec(x.gauss.clone()));
            for (u, v) in qn.iter().zip(&y.gauss) {
                assert!((u - v).abs() < 1e-12);
            }
        }
        let h = f.precompose(DomainDiffeo::squeeze(2, 0.7).unwrap()).unwrap();
        let ia = interval_of_samples(&a);
        let ib = radii_interval(&h).unwrap();
        // reparametrization moves samples, so compare against a dense reference
        assert!((ia.width() - ib.width()).abs() < 5e-3);
    }

    #[test]
    fn interval_tie_break_and_wraparound() {
        let iv = interval_of(&[0.1, PI - 0.1]);
        assert!((iv.width() - 0.2).abs() < 1e-12);
        assert!(iv.contains(0.0, 0.0));
        let iv = interval_of(&[0.5]);
        assert_eq!(iv.width(), 0.0);
        assert!((iv.mid - 0.5).abs() < 1e-15);
        let iv = interval_of(&[1.0, 1.2, 1.1]);
        assert!((iv.lo() - 1.0).abs() < 1e-12 && (iv.hi() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn gauss_equation_on_builtins() {
        let fams = [
            Immersion::round_simple(2, 0.7).unwrap(),
            Immersion::clifford(1, 1).unwrap(),
            Immersion::radial_graph(2, 0.9, 0.05, Profile::Mixed).unwrap(),
        ];
        for f in fams {
            let f = f.with_resolution(4);
            for cp in f.samples() {
                let s = shape_spectrum(&f, &cp).unwrap();
                let k = sectional_curvature(&f, &cp).unwrap();
                assert!((k - (1.0 + s.kappas[0] * s.kappas[1])).abs() < 1e-3, "{k} vs {:?}", s.kappas);
            }
        }
    }

    #[test]
    fn sample_invariants() {
        let f = Immersion::radial_graph(2, 1.1, 0.05, Profile::Quadrupole)
            .unwrap()
            .with_resolution(5);
        for s in spectra(&f).unwrap() {
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            assert!(dot(&s.gauss, &s.point).abs() < 1e-9);
            for d in &s.directions {
                assert!(dot(&s.gauss, d).abs() < 1e-8);
            }
            for (rho, k) in s.radii.iter().zip(&s.kappas) {
                assert!((1.0 / rho.tan() - k).abs() < 1e-8);
            }
        }
    }
}
