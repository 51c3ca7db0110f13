//! Linear algebra on the ambient space ℝ^{n+2} and point maps of the round
//! sphere: exponential map, stereographic and central projections, Möbius
//! contractions, the ζ flow and the rotations used to move a chosen center
//! to the south pole `-e_{n+2}`.
//!
//! Every map that is later composed with an immersion has a generic version
//! over [`Real`] so that it can be differentiated with jets; the public
//! `f64` versions add validation and error reporting.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{dot, normalize, Real};

/// Ambient distance below which a point counts as sitting on an excluded pole.
pub const POLE_TOLERANCE: f64 = 1e-9;

pub type AmbientVector = DVector<f64>;

/// The last basis vector `e_{n+2}` of an ambient space of dimension `dim`.
pub fn e_last(dim: usize) -> AmbientVector {
    let mut v = DVector::zeros(dim);
    v[dim - 1] = 1.0;
    v
}

/// A unit vector of ℝ^{n+2}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpherePoint(AmbientVector);

impl SpherePoint {
    /// Renormalizes `v`; fails on zero or non-finite input.
    pub fn new(v: AmbientVector) -> Result<SpherePoint> {
        let n = v.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(Error::Domain(format!("cannot normalize vector of norm {n}")));
        }
        Ok(SpherePoint(v / n))
    }

    pub fn from_slice(v: &[f64]) -> Result<SpherePoint> {
        SpherePoint::new(DVector::from_column_slice(v))
    }

    /// The pole `e_{n+2}` (`north = true`) or `-e_{n+2}`.
    pub fn pole(dim: usize, north: bool) -> SpherePoint {
        let e = e_last(dim);
        SpherePoint(if north { e } else { -e })
    }

    pub fn basis(dim: usize, i: usize) -> SpherePoint {
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        SpherePoint(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn vector(&self) -> &AmbientVector {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn antipode(&self) -> SpherePoint {
        SpherePoint(-&self.0)
    }

    /// Great-circle distance.
    pub fn angle_to(&self, other: &SpherePoint) -> f64 {
        angle_between(&self.0, &other.0)
    }
}

impl TryFrom<Vec<f64>> for SpherePoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<SpherePoint> {
        SpherePoint::new(DVector::from_vec(v))
    }
}

impl From<SpherePoint> for Vec<f64> {
    fn from(p: SpherePoint) -> Vec<f64> {
        p.0.as_slice().to_vec()
    }
}

/// Angle between two nonzero vectors, accurate for nearly (anti)parallel pairs.
pub fn angle_between(a: &AmbientVector, b: &AmbientVector) -> f64 {
    let a = a.normalize();
    let b = b.normalize();
    2.0 * (&a - &b).norm().atan2((&a + &b).norm())
}

/// A vector tangent to the sphere at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: SpherePoint,
    pub dir: AmbientVector,
}

impl TangentVector {
    pub fn new(base: SpherePoint, dir: AmbientVector) -> Result<TangentVector> {
        let radial = dir.dot(base.vector()).abs();
        if radial > 1e-10 * dir.norm().max(1e-300) && radial > 1e-300 {
            return Err(Error::Domain(format!(
                "vector is not tangent: radial component {radial:.3e}"
            )));
        }
        Ok(TangentVector { base, dir })
    }

    /// Projects an arbitrary ambient vector onto the tangent space at `base`.
    pub fn project(base: SpherePoint, v: &AmbientVector) -> TangentVector {
        let dir = v - base.vector() * v.dot(base.vector());
        TangentVector { base, dir }
    }

    pub fn norm(&self) -> f64 {
        self.dir.norm()
    }
}

/// A point of the Euclidean space ℝ^{n+1}, used both for the affine hyperplane
/// `ℝ^{n+1} × {-1}` (coordinates without the trailing `-1`) and for
/// stereographic charts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EuclideanPoint(pub Vec<f64>);

impl EuclideanPoint {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// An element of SO(n+2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Rotation(DMatrix<f64>);

impl Rotation {
    pub fn identity(dim: usize) -> Rotation {
        Rotation(DMatrix::identity(dim, dim))
    }

    /// Validates orthogonality and orientation within `1e-10`.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Rotation> {
        if !m.is_square() {
            return Err(Error::Domain("rotation matrix must be square".into()));
        }
        let dim = m.nrows();
        let gram = m.transpose() * &m;
        let dev = (gram - DMatrix::<f64>::identity(dim, dim)).amax();
        if dev > 1e-10 {
            return Err(Error::Domain(format!(
                "matrix is not orthogonal (deviation {dev:.3e})"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("determinant {det} is not +1")));
        }
        Ok(Rotation(m))
    }

    /// Rotation by `angle` in the oriented coordinate plane `(i, j)`.
    pub fn plane(dim: usize, i: usize, j: usize, angle: f64) -> Rotation {
        let mut m = DMatrix::identity(dim, dim);
        let (s, c) = angle.sin_cos();
        m[(i, i)] = c;
        m[(j, j)] = c;
        m[(j, i)] = s;
        m[(i, j)] = -s;
        Rotation(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(&self.0 * &other.0)
    }

    pub fn apply(&self, p: &SpherePoint) -> SpherePoint {
        SpherePoint(&self.0 * p.vector())
    }

    pub fn apply_vec(&self, v: &AmbientVector) -> AmbientVector {
        &self.0 * v
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        (&self.0 - DMatrix::<f64>::identity(self.dim(), self.dim())).amax() <= tol
    }

    /// Applies the matrix to a vector of jets or floats.
    pub fn apply_generic<T: Real>(&self, v: &[T]) -> Vec<T> {
        mat_apply(&self.0, v, false)
    }

    /// Applies the transpose (the inverse rotation).
    pub fn apply_inverse_generic<T: Real>(&self, v: &[T]) -> Vec<T> {
        mat_apply(&self.0, v, true)
    }

    /// Largest entrywise difference.
    pub fn distance(&self, other: &Rotation) -> f64 {
        (&self.0 - &other.0).amax()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Rotation {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Rotation> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Domain("rotation rows must form a square".into()));
        }
        Rotation::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }
}

impl From<Rotation> for Vec<Vec<f64>> {
    fn from(r: Rotation) -> Vec<Vec<f64>> {
        (0..r.dim())
            .map(|i| (0..r.dim()).map(|j| r.0[(i, j)]).collect())
            .collect()
    }
}

pub(crate) fn mat_apply<T: Real>(m: &DMatrix<f64>, v: &[T], transpose: bool) -> Vec<T> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let mut acc = v[0].zero_like();
            for (j, &x) in v.iter().enumerate() {
                let a = if transpose { m[(j, i)] } else { m[(i, j)] };
                if a != 0.0 {
                    acc = acc + x * a;
                }
            }
            acc
        })
        .collect()
}

/// `exp_p(v) = cos|v| p + sin|v| v/|v|`.
pub fn exp_sphere(p: &SpherePoint, v: &TangentVector) -> SpherePoint {
    let len = v.dir.norm();
    if len == 0.0 {
        return p.clone();
    }
    let out = p.vector() * len.cos() + &v.dir * (len.sin() / len);
    SpherePoint::new(out).expect("exp of a unit vector is a unit vector")
}

/// `ι_r(p) = sin r p - cos r e_{n+2}` for `p` on the equatorial sphere.
pub fn iota_r(r: f64, p: &[f64]) -> Result<SpherePoint> {
    if !(r > 0.0 && r < std::f64::consts::PI) {
        return Err(Error::Domain(format!("radius {r} is outside (0, pi)")));
    }
    let last = *p.last().ok_or_else(|| Error::Domain("empty point".into()))?;
    let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    if last.abs() > 1e-12 || (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(
            "point must be a unit vector with vanishing last coordinate".into(),
        ));
    }
    let (s, c) = r.sin_cos();
    let mut v: Vec<f64> = p.iter().map(|x| s * x).collect();
    let m = v.len();
    v[m - 1] = -c;
    SpherePoint::from_slice(&v)
}

/// `ι_r` on a point of Sⁿ ⊂ ℝ^{n+1}, returning a point of ℝ^{n+2}.
pub(crate) fn iota_generic<T: Real>(r: f64, p: &[T]) -> Vec<T> {
    let (s, c) = r.sin_cos();
    let mut out: Vec<T> = p.iter().map(|&x| x * s).collect();
    out.push(p[0].lift(-c));
    out
}

/// Minimal rotation carrying unit `a` to unit `b`; requires `<a, b> > -1`.
fn rodrigues(a: &AmbientVector, b: &AmbientVector) -> DMatrix<f64> {
    let dim = a.len();
    let k = b * a.transpose() - a * b.transpose();
    let k2 = &k * &k;
    DMatrix::identity(dim, dim) + &k + k2 / (1.0 + a.dot(b))
}

/// A rotation `Q` with `Q(-e_{n+2}) = c`.
///
/// Uses the minimal rotation in the plane of `-e_{n+2}` and `c`, which is the
/// identity at `c = -e_{n+2}` and continuous away from `c = e_{n+2}`. Within
/// `1e-6` of that pole the half-turn in the `(e_1, e_{n+2})` plane is
/// composed with the minimal rotation from `e_{n+2}` instead.
pub fn rotation_to(c: &SpherePoint) -> Rotation {
    let dim = c.dim();
    let south = -e_last(dim);
    let cv = c.vector();
    if 1.0 + south.dot(cv) > 1e-6 {
        Rotation(rodrigues(&south, cv))
    } else {
        let flip = Rotation::plane(dim, 0, dim - 1, std::f64::consts::PI);
        let north = e_last(dim);
        Rotation(rodrigues(&north, cv) * flip.0)
    }
}

/// Rotation `R` with `R(e_{n+2}) = c`, used for charts centered at `c`.
fn chart_rotation(c: &SpherePoint) -> Rotation {
    rotation_to(&c.antipode())
}

/// Stereographic projection from `-c`, sending `c` to the origin.
pub fn stereographic(c: &SpherePoint, p: &SpherePoint) -> Result<EuclideanPoint> {
    let d = (p.vector() + c.vector()).norm();
    if d < POLE_TOLERANCE {
        return Err(Error::Pole { distance: d });
    }
    let q = chart_rotation(c).inverse().apply(p);
    let q = q.as_slice();
    let m = q.len();
    let denom = 1.0 + q[m - 1];
    Ok(EuclideanPoint(q[..m - 1].iter().map(|x| x / denom).collect()))
}

/// Inverse of [`stereographic`].
pub fn stereographic_inv(c: &SpherePoint, x: &EuclideanPoint) -> SpherePoint {
    let r2: f64 = x.0.iter().map(|v| v * v).sum();
    let mut q: Vec<f64> = x.0.iter().map(|v| 2.0 * v / (1.0 + r2)).collect();
    q.push((1.0 - r2) / (1.0 + r2));
    let q = SpherePoint::from_slice(&q).expect("inverse chart lands on the sphere");
    chart_rotation(c).apply(&q)
}

/// `σ⁻¹(s σ(p))` for the chart centered at the north pole, written without
/// the chart so that it stays smooth at the south pole.
pub(crate) fn moebius_north_generic<T: Real>(s: f64, p: &[T]) -> Vec<T> {
    let m = p.len();
    let z = p[m - 1];
    let s2 = s * s;
    let plus = z + 1.0;
    let minus = -z + 1.0;
    let inv = (plus + minus * s2).recip();
    let mut out: Vec<T> = p[..m - 1].iter().map(|&y| y * (2.0 * s) * inv).collect();
    out.push((plus - minus * s2) * inv);
    out
}

/// Precomputed Möbius contraction `M_s` toward `c`.
#[derive(Debug, Clone)]
pub struct MoebiusMap {
    chart: Rotation,
    s: f64,
}

impl MoebiusMap {
    pub fn new(c: &SpherePoint, s: f64) -> Result<MoebiusMap> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::Domain(format!("moebius parameter {s} outside (0, 1]")));
        }
        Ok(MoebiusMap {
            chart: chart_rotation(c),
            s,
        })
    }

    pub fn apply_generic<T: Real>(&self, p: &[T]) -> Vec<T> {
        let q = self.chart.apply_inverse_generic(p);
        let q = moebius_north_generic(self.s, &q);
        self.chart.apply_generic(&q)
    }
}

/// `M_s(p) = σ_c⁻¹(s σ_c(p))`.
pub fn moebius(c: &SpherePoint, s: f64, p: &SpherePoint) -> Result<SpherePoint> {
    let d = (p.vector() + c.vector()).norm();
    if d < POLE_TOLERANCE {
        return Err(Error::Pole { distance: d });
    }
    let map = MoebiusMap::new(c, s)?;
    SpherePoint::from_slice(&map.apply_generic(p.as_slice()))
}

fn check_off_axis(q: &[f64]) -> Result<()> {
    let m = q.len();
    let off: f64 = q[..m - 1].iter().map(|x| x * x).sum::<f64>().sqrt();
    // distance to the nearer of ±e_{n+2}
    let d = (off * off + (1.0 - q[m - 1].abs()).powi(2)).sqrt();
    if d < POLE_TOLERANCE {
        return Err(Error::Pole { distance: d });
    }
    Ok(())
}

/// `ζ_s(q) = (q - s<q,e>e) / |q - s<q,e>e|`.
pub(crate) fn zeta_generic<T: Real>(s: f64, q: &[T]) -> Vec<T> {
    let m = q.len();
    let mut v = q.to_vec();
    v[m - 1] = q[m - 1] * (1.0 - s);
    normalize(&v)
}

pub fn zeta(s: f64, q: &SpherePoint) -> Result<SpherePoint> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Domain(format!("zeta parameter {s} outside [0, 1]")));
    }
    check_off_axis(q.as_slice())?;
    SpherePoint::from_slice(&zeta_generic(s, q.as_slice()))
}

/// `τ(p)`, the normalized projection onto the equatorial sphere, as a point of Sⁿ ⊂ ℝ^{n+1}.
pub fn tau(p: &SpherePoint) -> Result<Vec<f64>> {
    let z = zeta(1.0, p)?;
    let m = z.dim();
    Ok(z.as_slice()[..m - 1].to_vec())
}

/// Closed-form differential of `ζ_s` at `q` applied to tangent `u`.
pub fn dzeta(s: f64, q: &SpherePoint, u: &TangentVector) -> Result<AmbientVector> {
    check_off_axis(q.as_slice())?;
    let m = q.dim();
    let qe = q.vector()[m - 1];
    let ue = u.dir[m - 1];
    let e = e_last(m);
    let w = q.vector() - &e * (s * qe);
    let wn = w.norm();
    let first = (&u.dir - &e * (s * ue)) / wn;
    let second = &w * ((2.0 * s - s * s) * qe * ue / (wn * wn * wn));
    Ok(first + second)
}

/// Central projection of the open southern hemisphere onto `ℝ^{n+1} × {-1}`.
pub(crate) fn central_projection_generic<T: Real>(q: &[T]) -> Vec<T> {
    let m = q.len();
    let inv = (-q[m - 1]).recip();
    q[..m - 1].iter().map(|&x| x * inv).collect()
}

pub(crate) fn central_lift_generic<T: Real>(x: &[T]) -> Vec<T> {
    let mut v = x.to_vec();
    v.push(x[0].lift(-1.0));
    normalize(&v)
}

pub fn central_projection(q: &SpherePoint) -> Result<EuclideanPoint> {
    let m = q.dim();
    let h = q.as_slice()[m - 1];
    if h > -POLE_TOLERANCE {
        return Err(Error::Domain(format!(
            "central projection needs a strictly southern point (last coordinate {h:.3e})"
        )));
    }
    Ok(EuclideanPoint(central_projection_generic(q.as_slice())))
}

pub fn central_projection_inv(x: &EuclideanPoint) -> SpherePoint {
    SpherePoint::from_slice(&central_lift_generic(&x.0)).expect("lift is a unit vector")
}

/// `<a, b>` for plain slices.
pub fn dot_f64(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn sp(v: &[f64]) -> SpherePoint {
        SpherePoint::from_slice(v).unwrap()
    }

    fn dist(a: &SpherePoint, b: &SpherePoint) -> f64 {
        (a.vector() - b.vector()).norm()
    }

    #[test]
    fn exp_examples() {
        let e1 = SpherePoint::basis(4, 0);
        let zero = TangentVector::new(e1.clone(), DVector::zeros(4)).unwrap();
        assert_eq!(exp_sphere(&e1, &zero), e1);

        let nu = DVector::from_vec(vec![0.0, 0.0, 0.6, 0.8]);
        let quarter = TangentVector::new(e1.clone(), nu.clone() * FRAC_PI_2).unwrap();
        assert!(dist(&exp_sphere(&e1, &quarter), &SpherePoint::new(nu).unwrap()) < 1e-15);

        let half = TangentVector::new(e1.clone(), SpherePoint::basis(4, 1).vector() * PI).unwrap();
        assert!(dist(&exp_sphere(&e1, &half), &e1.antipode()) < 1e-15);
    }

    #[test]
    fn iota_examples() {
        let p = [0.0, 0.6, 0.8, 0.0];
        let q = iota_r(FRAC_PI_2, &p).unwrap();
        assert!(dist(&q, &sp(&p)) < 1e-15);
        let q = iota_r(FRAC_PI_4, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let h = 0.5f64.sqrt();
        assert!(dist(&q, &sp(&[h, 0.0, 0.0, -h])) < 1e-15);
        assert!(iota_r(0.0, &p).is_err());
        assert!(iota_r(PI, &p).is_err());
    }

    #[test]
    fn stereographic_round_trip_and_pole() {
        let north = SpherePoint::pole(4, true);
        let x = stereographic(&north, &north).unwrap();
        assert!(x.norm() < 1e-15);
        let c = sp(&[0.3, -0.2, 0.5, 0.4]);
        let p = sp(&[-0.1, 0.7, 0.2, -0.3]);
        let back = stereographic_inv(&c, &stereographic(&c, &p).unwrap());
        assert!(dist(&back, &p) < 1e-12);
        assert!(matches!(
            stereographic(&c, &c.antipode()),
            Err(Error::Pole { .. })
        ));
        // the center maps to the origin
        assert!(stereographic(&c, &c).unwrap().norm() < 1e-14);
    }

    #[test]
    fn stereographic_metric_is_conformal_factor() {
        let c = sp(&[0.1, 0.2, -0.4, 0.8]);
        let x = [0.3, -0.5, 0.7];
        let h = 1e-6;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let factor = 4.0 / (1.0 + r2).powi(2);
        let cols: Vec<AmbientVector> = (0..3)
            .map(|i| {
                let mut a = x;
                let mut b = x;
                a[i] += h;
                b[i] -= h;
                let pa = stereographic_inv(&c, &EuclideanPoint(a.to_vec()));
                let pb = stereographic_inv(&c, &EuclideanPoint(b.to_vec()));
                (pa.vector() - pb.vector()) / (2.0 * h)
            })
            .collect();
        for i in 0..3 {
            for j in 0..3 {
                let g = cols[i].dot(&cols[j]);
                let expect = if i == j { factor } else { 0.0 };
                assert!((g - expect).abs() < 1e-6, "g[{i}{j}] = {g}, expected {expect}");
            }
        }
    }

    #[test]
    fn moebius_identity_and_fixed_center() {
        let c = sp(&[0.4, 0.1, -0.3, 0.5]);
        let p = sp(&[-0.2, 0.3, 0.9, 0.1]);
        assert!(dist(&moebius(&c, 1.0, &p).unwrap(), &p) < 1e-12);
        let north = SpherePoint::pole(4, true);
        assert!(dist(&moebius(&north, 0.3, &north).unwrap(), &north) < 1e-15);
        assert!(moebius(&c, 0.0, &p).is_err());
        assert!(matches!(
            moebius(&c, 0.5, &c.antipode()),
            Err(Error::Pole { .. })
        ));
    }

    #[test]
    fn moebius_matches_chart_definition() {
        let c = sp(&[0.2, -0.5, 0.1, 0.4]);
        let p = sp(&[0.7, 0.1, -0.3, 0.2]);
        let s = 0.37;
        let x = stereographic(&c, &p).unwrap();
        let scaled = EuclideanPoint(x.0.iter().map(|v| v * s).collect());
        let expect = stereographic_inv(&c, &scaled);
        assert!(dist(&moebius(&c, s, &p).unwrap(), &expect) < 1e-12);
    }

    #[test]
    fn zeta_examples() {
        let q = sp(&[0.3, 0.4, 0.1, -0.6]);
        assert!(dist(&zeta(0.0, &q).unwrap(), &q) < 1e-15);
        let z1 = zeta(1.0, &q).unwrap();
        assert_eq!(z1.as_slice()[3], 0.0);
        assert!(dist(&z1, &sp(&[0.3, 0.4, 0.1, 0.0])) < 1e-15);
        let eq = sp(&[0.6, 0.0, 0.8, 0.0]);
        for s in [0.0, 0.3, 1.0] {
            assert!(dist(&zeta(s, &eq).unwrap(), &eq) < 1e-15);
        }
        assert!(zeta(0.5, &SpherePoint::pole(4, false)).is_err());
        assert_eq!(tau(&q).unwrap().len(), 3);
    }

    #[test]
    fn dzeta_trivial_cases() {
        let q = sp(&[0.3, 0.4, 0.1, -0.6]);
        let u = TangentVector::project(q.clone(), &DVector::from_vec(vec![0.1, -0.2, 0.5, 0.3]));
        let d0 = dzeta(0.0, &q, &u).unwrap();
        assert!((d0 - &u.dir).norm() < 1e-15);
        let qe = sp(&[0.6, 0.0, 0.8, 0.0]);
        let ue = TangentVector::new(qe.clone(), DVector::from_vec(vec![0.8, 0.0, -0.6, 0.0])).unwrap();
        let d = dzeta(0.7, &qe, &ue).unwrap();
        assert!((d - &ue.dir).norm() < 1e-15);
    }

    #[test]
    fn central_projection_examples() {
        let south = SpherePoint::pole(4, false);
        assert!(central_projection(&south).unwrap().norm() < 1e-15);
        let q = iota_r(FRAC_PI_4, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        let x = central_projection(&q).unwrap();
        assert!((x.0[1] - 1.0).abs() < 1e-15 && x.0[0].abs() < 1e-15);
        let q = sp(&[0.3, -0.2, 0.1, -0.7]);
        let back = central_projection_inv(&central_projection(&q).unwrap());
        assert!(dist(&back, &q) < 1e-12);
        assert!(central_projection(&SpherePoint::basis(4, 0)).is_err());
    }

    #[test]
    fn rotation_to_examples() {
        let south = SpherePoint::pole(5, false);
        assert!(rotation_to(&south).is_identity(1e-15));
        for c in [
            sp(&[0.3, -0.2, 0.1, 0.5, -0.7]),
            sp(&[0.0, 0.0, 0.0, 0.0, 1.0]),
            sp(&[1e-8, 0.0, 0.0, 0.0, 1.0]),
            sp(&[0.0, 1.0, 0.0, 0.0, 0.0]),
        ] {
            let q = rotation_to(&c);
            Rotation::from_matrix(q.matrix().clone()).expect("valid rotation");
            assert!(dist(&q.apply(&south), &c) < 1e-10);
        }
    }

    #[test]
    fn rotation_choices_differ_by_block_fixing_pole() {
        let c = sp(&[0.3, -0.2, 0.1, 0.5]);
        let q1 = rotation_to(&c);
        // another valid choice: q1 composed with a rotation fixing e_{n+2}
        let p = Rotation::plane(4, 0, 2, 0.7).compose(&Rotation::plane(4, 1, 2, -0.3));
        let q2 = q1.compose(&p);
        let south = SpherePoint::pole(4, false);
        assert!(dist(&q2.apply(&south), &c) < 1e-12);
        let block = q1.inverse().compose(&q2);
        let north = SpherePoint::pole(4, true);
        assert!(dist(&block.apply(&north), &north) < 1e-12);
    }
}
