//! Parametric immersions given as expression trees over a sampled domain.
//!
//! Domains are `Sⁿ`, covered by the `2(n+1)` faces of the cube `[-1,1]^{n+1}`
//! projected radially, or the torus `S¹×S¹` with angle coordinates. An
//! [`Expr`] is evaluated on jets in the chart coordinates, so any node that
//! needs the Gauss map of a subexpression (normal translates, Euclidean
//! Gauss maps inside reparametrizations) differentiates it on the fly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{det, layout, normalize, variables, Jet, Real};
use crate::sphere::{
    central_lift_generic, central_projection_generic, iota_generic, MoebiusMap, Rotation,
    SpherePoint, zeta_generic,
};
use crate::{par_map, DEFAULT_RESOLUTION};

/// Finite-difference step for numeric Jacobians.
pub const FD_STEP: f64 = 1e-5;
/// Finite-difference step for numeric second derivatives.
pub const FD_STEP_HESSIAN: f64 = 1e-3;
/// Minimum ratio of smallest to largest singular value of the Jacobian.
pub const RANK_TOLERANCE: f64 = 1e-7;

/// The parameter manifold of an immersion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Sphere { n: usize },
    Torus,
}

/// A chart index and chart coordinates (only the first `n` entries are used).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub chart: usize,
    pub x: [f64; 3],
    pub n: usize,
}

impl ChartPoint {
    pub fn new(chart: usize, params: &[f64]) -> ChartPoint {
        let mut x = [0.0; 3];
        x[..params.len()].copy_from_slice(params);
        ChartPoint {
            chart,
            x,
            n: params.len(),
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.x[..self.n]
    }
}

impl Domain {
    pub fn sphere(n: usize) -> Domain {
        Domain::Sphere { n }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Sphere { n } => *n,
            Domain::Torus => 2,
        }
    }

    pub fn chart_count(&self) -> usize {
        match self {
            Domain::Sphere { n } => 2 * (n + 1),
            Domain::Torus => 1,
        }
    }

    /// Face axis and sign of a cube chart.
    fn face(chart: usize) -> (usize, f64) {
        (chart / 2, if chart % 2 == 0 { 1.0 } else { -1.0 })
    }

    /// Sign of `det[∂p/∂x_1, …, ∂p/∂x_n, p]` on the chart.
    pub fn chart_orientation(&self, chart: usize) -> f64 {
        match self {
            Domain::Sphere { n } => {
                let (axis, sign) = Domain::face(chart);
                if (n - axis) % 2 == 0 {
                    sign
                } else {
                    -sign
                }
            }
            Domain::Torus => 1.0,
        }
    }

    /// Domain point for chart coordinates: a unit vector of ℝ^{n+1} for
    /// spheres, the angle pair for the torus.
    pub fn point_generic<T: Real>(&self, chart: usize, x: &[T]) -> Vec<T> {
        match self {
            Domain::Sphere { n } => {
                let (axis, sign) = Domain::face(chart);
                let mut c = Vec::with_capacity(n + 1);
                let mut k = 0;
                for i in 0..=*n {
                    if i == axis {
                        c.push(x[0].lift(sign));
                    } else {
                        c.push(x[k]);
                        k += 1;
                    }
                }
                normalize(&c)
            }
            Domain::Torus => x.to_vec(),
        }
    }

    pub fn point(&self, cp: &ChartPoint) -> Vec<f64> {
        self.point_generic(cp.chart, cp.params())
    }

    /// Chart coordinates of a domain point, using the face where it is most central.
    pub fn locate(&self, p: &[f64]) -> ChartPoint {
        match self {
            Domain::Sphere { .. } => {
                let (axis, _) = p
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                    .expect("nonempty point");
                let lead = p[axis];
                let chart = 2 * axis + usize::from(lead < 0.0);
                let params: Vec<f64> = p
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != axis)
                    .map(|(_, v)| v / lead.abs())
                    .collect();
                ChartPoint::new(chart, &params)
            }
            Domain::Torus => {
                let wrap = |t: f64| t.rem_euclid(std::f64::consts::TAU);
                ChartPoint::new(0, &[wrap(p[0]), wrap(p[1])])
            }
        }
    }

    /// Deterministic sample grid with `res` points per chart axis.
    pub fn samples(&self, res: usize) -> Vec<ChartPoint> {
        let n = self.dim();
        let mut out = Vec::with_capacity(self.chart_count() * res.pow(n as u32));
        for chart in 0..self.chart_count() {
            let mut idx = vec![0usize; n];
            loop {
                let params: Vec<f64> = idx
                    .iter()
                    .map(|&i| match self {
                        Domain::Sphere { .. } => -1.0 + (2 * i + 1) as f64 / res as f64,
                        Domain::Torus => std::f64::consts::TAU * i as f64 / res as f64,
                    })
                    .collect();
                out.push(ChartPoint::new(chart, &params));
                let mut k = n;
                loop {
                    if k == 0 {
                        break;
                    }
                    k -= 1;
                    idx[k] += 1;
                    if idx[k] < res {
                        break;
                    }
                    idx[k] = 0;
                    if k == 0 {
                        k = usize::MAX;
                        break;
                    }
                }
                if k == usize::MAX {
                    break;
                }
            }
        }
        out
    }

    /// Nominal parameter distance between neighboring samples.
    pub fn grid_step(&self, res: usize) -> f64 {
        match self {
            Domain::Sphere { .. } => std::f64::consts::FRAC_PI_2 / res as f64,
            Domain::Torus => std::f64::consts::TAU / res as f64,
        }
    }

    /// Parameter separation of two domain points in grid hops.
    pub fn hops(&self, a: &[f64], b: &[f64], res: usize) -> f64 {
        let step = self.grid_step(res);
        match self {
            Domain::Sphere { .. } => {
                let da = DVector::from_column_slice(a);
                let db = DVector::from_column_slice(b);
                crate::sphere::angle_between(&da, &db) / step
            }
            Domain::Torus => {
                let wrapped = |d: f64| {
                    let d = d.rem_euclid(std::f64::consts::TAU);
                    d.min(std::f64::consts::TAU - d)
                };
                wrapped(a[0] - b[0]).max(wrapped(a[1] - b[1])) / step
            }
        }
    }
}

/// How derivatives of an immersion are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffMode {
    #[default]
    Analytic,
    Numeric,
}

/// Target space of an expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ambient {
    Sphere,
    Euclidean,
}

/// Smooth height functions on Sⁿ for radial graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `h(p) = p_{n+1}`.
    Zonal,
    /// `h(p) = p_1² - p_2²`.
    Quadrupole,
    /// `h(p) = p_1² - p_2² + p_{n+1}/2`.
    #[default]
    Mixed,
}

impl Profile {
    fn eval<T: Real>(&self, p: &[T]) -> T {
        let last = p[p.len() - 1];
        match self {
            Profile::Zonal => last,
            Profile::Quadrupole => p[0] * p[0] - p[1] * p[1],
            Profile::Mixed => p[0] * p[0] - p[1] * p[1] + last * 0.5,
        }
    }
}

/// Orientation-preserving diffeomorphisms of the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainDiffeo {
    Identity,
    /// `p ↦ A p / |A p|` for `det A > 0`.
    Linear { matrix: Vec<Vec<f64>> },
    /// Angle shift of the torus.
    TorusShift { theta: f64, phi: f64 },
    /// Gauss map of a Euclidean immersion of the domain.
    EuclideanGauss { map: Box<Expr> },
    /// `p ↦ τ(h(p))` for a spherical immersion `h`.
    Equatorial { map: Box<Expr> },
    /// `outer ∘ inner`.
    Compose {
        outer: Box<DomainDiffeo>,
        inner: Box<DomainDiffeo>,
    },
}

impl DomainDiffeo {
    /// A linear diffeo; requires a square matrix with positive determinant.
    pub fn linear(m: DMatrix<f64>) -> Result<DomainDiffeo> {
        if !m.is_square() {
            return Err(Error::Domain("linear diffeo needs a square matrix".into()));
        }
        let d = m.determinant();
        if d.is_nan() || d <= 0.0 {
            return Err(Error::Domain(format!(
                "linear diffeo must preserve orientation (det {d})"
            )));
        }
        Ok(DomainDiffeo::Linear {
            matrix: (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect(),
        })
    }

    /// Rotation of Sⁿ.
    pub fn rotation(r: &Rotation) -> DomainDiffeo {
        DomainDiffeo::linear(r.matrix().clone()).expect("rotations have det 1")
    }

    /// North-south squeeze `diag(1, …, 1, λ)` followed by normalization.
    pub fn squeeze(n: usize, lambda: f64) -> Result<DomainDiffeo> {
        let mut m = DMatrix::identity(n + 1, n + 1);
        m[(n, n)] = lambda;
        DomainDiffeo::linear(m)
    }

    pub fn compose(outer: DomainDiffeo, inner: DomainDiffeo) -> DomainDiffeo {
        match (&outer, &inner) {
            (DomainDiffeo::Identity, _) => inner,
            (_, DomainDiffeo::Identity) => outer,
            _ => DomainDiffeo::Compose {
                outer: Box::new(outer),
                inner: Box::new(inner),
            },
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, DomainDiffeo::Identity)
    }

    /// Number of derivative orders consumed by evaluation.
    pub fn depth(&self) -> usize {
        match self {
            DomainDiffeo::Identity | DomainDiffeo::Linear { .. } | DomainDiffeo::TorusShift { .. } => 0,
            DomainDiffeo::EuclideanGauss { map } => map.depth() + 1,
            DomainDiffeo::Equatorial { map } => map.depth(),
            DomainDiffeo::Compose { outer, inner } => outer.depth() + inner.depth(),
        }
    }

    fn check(&self, domain: Domain) -> Result<()> {
        match (self, domain) {
            (DomainDiffeo::Identity, _) => Ok(()),
            (DomainDiffeo::Linear { matrix }, Domain::Sphere { n }) => {
                if matrix.len() != n + 1 || matrix.iter().any(|r| r.len() != n + 1) {
                    Err(Error::Domain(format!("linear diffeo of S^{n} must be {0}x{0}", n + 1)))
                } else {
                    Ok(())
                }
            }
            (DomainDiffeo::TorusShift { .. }, Domain::Torus) => Ok(()),
            (DomainDiffeo::EuclideanGauss { map }, d) => {
                if map.ambient() != Ambient::Euclidean || map.domain()? != d {
                    return Err(Error::Domain(
                        "Gauss reparametrization needs a Euclidean immersion of the same domain".into(),
                    ));
                }
                Ok(())
            }
            (DomainDiffeo::Equatorial { map }, d @ Domain::Sphere { .. }) => {
                if map.ambient() != Ambient::Sphere || map.domain()? != d {
                    return Err(Error::Domain(
                        "equatorial reparametrization needs a spherical immersion of the same domain".into(),
                    ));
                }
                Ok(())
            }
            (DomainDiffeo::Compose { outer, inner }, d) => {
                outer.check(d)?;
                inner.check(d)
            }
            (g, d) => Err(Error::Domain(format!("diffeo {g:?} does not act on {d:?}"))),
        }
    }

    pub(crate) fn apply(&self, p: &[Jet], orient: f64) -> Vec<Jet> {
        match self {
            DomainDiffeo::Identity => p.to_vec(),
            DomainDiffeo::Linear { matrix } => {
                let v: Vec<Jet> = matrix
                    .iter()
                    .map(|row| {
                        let mut acc = p[0].zero_like();
                        for (a, &x) in row.iter().zip(p) {
                            if *a != 0.0 {
                                acc = acc + x * *a;
                            }
                        }
                        acc
                    })
                    .collect();
                normalize(&v)
            }
            DomainDiffeo::TorusShift { theta, phi } => vec![p[0] + *theta, p[1] + *phi],
            DomainDiffeo::EuclideanGauss { map } => {
                let phi = map.eval(p, orient);
                gauss_of_jets(&phi, Ambient::Euclidean, orient)
            }
            DomainDiffeo::Equatorial { map } => {
                let h = map.eval(p, orient);
                normalize(&h[..h.len() - 1])
            }
            DomainDiffeo::Compose { outer, inner } => outer.apply(&inner.apply(p, orient), orient),
        }
    }

    /// Image of a domain point.
    pub fn apply_point(&self, domain: Domain, p: &[f64]) -> Vec<f64> {
        let cp = domain.locate(p);
        self.apply_chart(domain, &cp)
    }

    /// Image of the domain point with chart coordinates `cp`.
    pub fn apply_chart(&self, domain: Domain, cp: &ChartPoint) -> Vec<f64> {
        let lay = layout(domain.dim(), self.depth());
        let x: Vec<Jet> = cp
            .params()
            .iter()
            .enumerate()
            .map(|(i, &v)| Jet::variable(lay, i, v))
            .collect();
        let p = domain.point_generic(cp.chart, &x);
        self.apply(&p, domain.chart_orientation(cp.chart))
            .iter()
            .map(|j| j.value())
            .collect()
    }

    /// Derivative of the diffeo in chart coordinates, as columns.
    pub fn chart_jacobian(&self, domain: Domain, cp: &ChartPoint) -> Vec<Vec<f64>> {
        let lay = layout(domain.dim(), self.depth() + 1);
        let x: Vec<Jet> = cp
            .params()
            .iter()
            .enumerate()
            .map(|(i, &v)| Jet::variable(lay, i, v))
            .collect();
        let p = domain.point_generic(cp.chart, &x);
        let g = self.apply(&p, domain.chart_orientation(cp.chart));
        (0..domain.dim())
            .map(|i| g.iter().map(|j| j.d1(i)).collect())
            .collect()
    }

    /// Orientation sign of the diffeo at `cp`: `det[dg(∂_1), …, dg(∂_n), g(p)]`
    /// compared with the chart orientation (`+1` when orientation is preserved).
    pub fn orientation_at(&self, domain: Domain, cp: &ChartPoint) -> f64 {
        let cols = self.chart_jacobian(domain, cp);
        let orient = domain.chart_orientation(cp.chart);
        let d = match domain {
            Domain::Sphere { n } => {
                let g = self.apply_chart(domain, cp);
                let m: Vec<Vec<f64>> = (0..=n)
                    .map(|row| {
                        let mut r: Vec<f64> = cols.iter().map(|c| c[row]).collect();
                        r.push(g[row]);
                        r
                    })
                    .collect();
                det(&m)
            }
            Domain::Torus => cols[0][0] * cols[1][1] - cols[0][1] * cols[1][0],
        };
        (d * orient).signum()
    }

    /// Preimage of a domain point, by seeded Gauss-Newton in chart coordinates.
    pub fn invert(&self, domain: Domain, q: &[f64]) -> Result<Vec<f64>> {
        match self {
            DomainDiffeo::Identity => return Ok(q.to_vec()),
            DomainDiffeo::TorusShift { theta, phi } => return Ok(vec![q[0] - theta, q[1] - phi]),
            DomainDiffeo::Linear { matrix } => {
                let n = matrix.len();
                let m = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
                let inv = m
                    .try_inverse()
                    .ok_or_else(|| Error::Numeric("singular linear diffeo".into()))?;
                let v = inv * DVector::from_column_slice(q);
                return Ok((v.clone() / v.norm()).as_slice().to_vec());
            }
            _ => {}
        }
        let seeds = domain.samples(12);
        let images: Vec<Vec<f64>> = par_map(&seeds, |cp| self.apply_chart(domain, cp));
        let dist = |a: &[f64], b: &[f64]| -> f64 {
            match domain {
                Domain::Torus => domain.hops(a, b, 1),
                Domain::Sphere { .. } => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum(),
            }
        };
        let best = (0..seeds.len())
            .min_by(|&i, &j| dist(&images[i], q).total_cmp(&dist(&images[j], q)))
            .expect("seed grid is nonempty");
        let mut cp = seeds[best];
        for _ in 0..50 {
            let g = self.apply_chart(domain, &cp);
            let mut resid: Vec<f64> = q.iter().zip(&g).map(|(a, b)| a - b).collect();
            if let Domain::Torus = domain {
                for r in resid.iter_mut() {
                    *r = (*r + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU)
                        - std::f64::consts::PI;
                }
            }
            let norm: f64 = resid.iter().map(|r| r * r).sum::<f64>().sqrt();
            if norm < 1e-13 {
                break;
            }
            let cols = self.chart_jacobian(domain, &cp);
            let n = cols.len();
            let jm = DMatrix::from_fn(g.len(), n, |i, j| cols[j][i]);
            let step = (jm.transpose() * &jm)
                .try_inverse()
                .ok_or_else(|| Error::Numeric("singular diffeo jacobian".into()))?
                * jm.transpose()
                * DVector::from_vec(resid);
            let params: Vec<f64> = cp.params().iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            cp = ChartPoint::new(cp.chart, &params);
            // keep the chart well conditioned
            let p = domain.point(&cp);
            cp = domain.locate(&p);
        }
        let p = domain.point(&cp);
        let g = self.apply_point(domain, &p);
        let err: f64 = match domain {
            Domain::Torus => domain.hops(&g, q, 1) * std::f64::consts::TAU,
            Domain::Sphere { .. } => g.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(),
        };
        if err > 1e-9 {
            return Err(Error::Numeric(format!("diffeo inversion residual {err:.3e}")));
        }
        Ok(p)
    }
}

/// Expression tree of an immersion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Expr {
    /// `Q ∘ ι_r ∘ g` on Sⁿ.
    Round {
        n: usize,
        r: f64,
        rotation: Rotation,
        diffeo: DomainDiffeo,
    },
    /// `(θ, φ) ↦ (cos aθ, sin aθ, cos bφ, sin bφ)/√2`.
    Clifford { a: u32, b: u32 },
    /// `p ↦ sin ρ(p) p - cos ρ(p) e_{n+2}` with `ρ = r0 + eps·h`.
    RadialGraph {
        n: usize,
        r0: f64,
        eps: f64,
        profile: Profile,
    },
    /// `cos r f + sin r ν_f`.
    Translate { inner: Box<Expr>, r: f64 },
    Rotate { rotation: Rotation, inner: Box<Expr> },
    Precompose { inner: Box<Expr>, diffeo: DomainDiffeo },
    Moebius {
        inner: Box<Expr>,
        center: SpherePoint,
        s: f64,
    },
    /// `ζ_s ∘ f`.
    Zeta { inner: Box<Expr>, s: f64 },
    /// Central projection to `ℝ^{n+1} × {-1}` (Euclidean output).
    CentralProjection { inner: Box<Expr> },
    /// Inverse central projection of a Euclidean immersion.
    CentralLift { inner: Box<Expr> },
    /// `p ↦ tan r g(p)` in Euclidean space.
    EuclideanRound { n: usize, r: f64, diffeo: DomainDiffeo },
    /// `(1 - s) φ + s tan r ν_φ` for a Euclidean immersion `φ`.
    StraightLine { inner: Box<Expr>, r: f64, s: f64 },
}

impl Expr {
    pub fn domain(&self) -> Result<Domain> {
        match self {
            Expr::Round { n, .. } | Expr::RadialGraph { n, .. } | Expr::EuclideanRound { n, .. } => {
                Ok(Domain::Sphere { n: *n })
            }
            Expr::Clifford { .. } => Ok(Domain::Torus),
            Expr::Translate { inner, .. }
            | Expr::Rotate { inner, .. }
            | Expr::Precompose { inner, .. }
            | Expr::Moebius { inner, .. }
            | Expr::Zeta { inner, .. }
            | Expr::CentralProjection { inner }
            | Expr::CentralLift { inner }
            | Expr::StraightLine { inner, .. } => inner.domain(),
        }
    }

    pub fn ambient(&self) -> Ambient {
        match self {
            Expr::CentralProjection { .. } | Expr::EuclideanRound { .. } | Expr::StraightLine { .. } => {
                Ambient::Euclidean
            }
            Expr::Precompose { inner, .. } => inner.ambient(),
            _ => Ambient::Sphere,
        }
    }

    /// Number of derivative orders consumed by evaluation.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Round { diffeo, .. } | Expr::EuclideanRound { diffeo, .. } => diffeo.depth(),
            Expr::Clifford { .. } | Expr::RadialGraph { .. } => 0,
            Expr::Translate { inner, .. } | Expr::StraightLine { inner, .. } => inner.depth() + 1,
            Expr::Precompose { inner, diffeo } => inner.depth() + diffeo.depth(),
            Expr::Rotate { inner, .. }
            | Expr::Moebius { inner, .. }
            | Expr::Zeta { inner, .. }
            | Expr::CentralProjection { inner }
            | Expr::CentralLift { inner } => inner.depth(),
        }
    }

    /// Structural validation: dimensions, parameter ranges, ambient kinds.
    pub fn validate(&self) -> Result<()> {
        let domain = self.domain()?;
        let n = domain.dim();
        let need_sphere = |e: &Expr| -> Result<()> {
            if e.ambient() != Ambient::Sphere {
                return Err(Error::Domain("operation needs a spherical immersion".into()));
            }
            Ok(())
        };
        let need_euclid = |e: &Expr| -> Result<()> {
            if e.ambient() != Ambient::Euclidean {
                return Err(Error::Domain("operation needs a Euclidean immersion".into()));
            }
            Ok(())
        };
        let rot_dim = |r: &Rotation| -> Result<()> {
            if r.dim() != n + 2 {
                return Err(Error::Domain(format!("rotation must act on R^{}", n + 2)));
            }
            Ok(())
        };
        match self {
            Expr::Round { n, r, rotation, diffeo } => {
                if !(*n >= 1 && *n <= 3) {
                    return Err(Error::Domain(format!("dimension {n} not supported")));
                }
                if !(*r > 0.0 && *r < std::f64::consts::PI) {
                    return Err(Error::Domain(format!("radius {r} outside (0, pi)")));
                }
                rot_dim(rotation)?;
                diffeo.check(domain)
            }
            Expr::Clifford { a, b } => {
                if *a == 0 || *b == 0 {
                    return Err(Error::Domain("wrap degrees must be positive".into()));
                }
                Ok(())
            }
            Expr::RadialGraph { n, r0, .. } => {
                if !(*n >= 2 && *n <= 3) {
                    return Err(Error::Domain(format!("dimension {n} not supported")));
                }
                if !(*r0 > 0.0 && *r0 < std::f64::consts::PI) {
                    return Err(Error::Domain(format!("base radius {r0} outside (0, pi)")));
                }
                Ok(())
            }
            Expr::EuclideanRound { n, r, diffeo } => {
                if !(*n >= 1 && *n <= 3) {
                    return Err(Error::Domain(format!("dimension {n} not supported")));
                }
                if !(*r > 0.0 && *r < std::f64::consts::FRAC_PI_2) {
                    return Err(Error::Domain(format!("radius {r} outside (0, pi/2)")));
                }
                diffeo.check(domain)
            }
            Expr::Translate { inner, .. } | Expr::Zeta { inner, .. } | Expr::CentralProjection { inner } => {
                inner.validate()?;
                need_sphere(inner)
            }
            Expr::Rotate { rotation, inner } => {
                inner.validate()?;
                need_sphere(inner)?;
                rot_dim(rotation)
            }
            Expr::Moebius { inner, center, s } => {
                inner.validate()?;
                need_sphere(inner)?;
                if center.dim() != n + 2 {
                    return Err(Error::Domain("Moebius center has wrong dimension".into()));
                }
                if !(*s > 0.0 && *s <= 1.0) {
                    return Err(Error::Domain(format!("moebius parameter {s} outside (0, 1]")));
                }
                Ok(())
            }
            Expr::Precompose { inner, diffeo } => {
                inner.validate()?;
                diffeo.check(domain)
            }
            Expr::CentralLift { inner } | Expr::StraightLine { inner, .. } => {
                inner.validate()?;
                need_euclid(inner)
            }
        }
    }

    /// Evaluates on domain-point jets; `orient` is the chart orientation.
    pub(crate) fn eval(&self, p: &[Jet], orient: f64) -> Vec<Jet> {
        match self {
            Expr::Round { r, rotation, diffeo, .. } => {
                let q = diffeo.apply(p, orient);
                rotation.apply_generic(&iota_generic(*r, &q))
            }
            Expr::Clifford { a, b } => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                let t = p[0] * f64::from(*a);
                let u = p[1] * f64::from(*b);
                vec![t.cos() * h, t.sin() * h, u.cos() * h, u.sin() * h]
            }
            Expr::RadialGraph { r0, eps, profile, .. } => {
                let rho = profile.eval(p) * *eps + *r0;
                let (s, c) = (rho.sin(), rho.cos());
                let mut out: Vec<Jet> = p.iter().map(|&x| x * s).collect();
                out.push(-c);
                out
            }
            Expr::Translate { inner, r } => {
                let f = inner.eval(p, orient);
                let nu = gauss_of_jets(&f, Ambient::Sphere, orient);
                let (s, c) = r.sin_cos();
                f.iter().zip(&nu).map(|(&a, &b)| a * c + b * s).collect()
            }
            Expr::Rotate { rotation, inner } => rotation.apply_generic(&inner.eval(p, orient)),
            Expr::Precompose { inner, diffeo } => inner.eval(&diffeo.apply(p, orient), orient),
            Expr::Moebius { inner, center, s } => {
                let map = MoebiusMap::new(center, *s).expect("validated parameter");
                map.apply_generic(&inner.eval(p, orient))
            }
            Expr::Zeta { inner, s } => zeta_generic(*s, &inner.eval(p, orient)),
            Expr::CentralProjection { inner } => central_projection_generic(&inner.eval(p, orient)),
            Expr::CentralLift { inner } => central_lift_generic(&inner.eval(p, orient)),
            Expr::EuclideanRound { r, diffeo, .. } => {
                let t = r.tan();
                diffeo.apply(p, orient).iter().map(|&x| x * t).collect()
            }
            Expr::StraightLine { inner, r, s } => {
                let phi = inner.eval(p, orient);
                let nu = gauss_of_jets(&phi, Ambient::Euclidean, orient);
                let t = r.tan();
                phi.iter()
                    .zip(&nu)
                    .map(|(&a, &b)| a * (1.0 - s) + b * (s * t))
                    .collect()
            }
        }
    }
}

/// Unit normal `ν` with `det[c_1, …, c_n, ν, f] > 0` (spherical) or
/// `det[c_1, …, c_n, ν] > 0` (Euclidean), times `orient`. Returns NaNs when
/// the columns are dependent.
pub fn gauss_generic<T: Real>(point: &[T], cols: &[Vec<T>], ambient: Ambient, orient: f64) -> Vec<T> {
    let n = cols.len();
    let m = cols[0].len();
    let mut normal = Vec::with_capacity(m);
    for k in 0..m {
        let minor: Vec<Vec<T>> = (0..m)
            .filter(|&row| row != k)
            .map(|row| {
                let mut r: Vec<T> = cols.iter().map(|c| c[row]).collect();
                if ambient == Ambient::Sphere {
                    r.push(point[row]);
                }
                r
            })
            .collect();
        let d = det(&minor);
        normal.push(if (k + n) % 2 == 0 { d } else { -d });
    }
    normalize(&normal)
        .into_iter()
        .map(|x| x * orient)
        .collect()
}

/// Gauss map of jets in chart variables, one order lower than the input.
fn gauss_of_jets(f: &[Jet], ambient: Ambient, orient: f64) -> Vec<Jet> {
    let n = f[0].nvars();
    let order = f[0].order() - 1;
    let cols: Vec<Vec<Jet>> = (0..n)
        .map(|i| f.iter().map(|x| x.partial(i)).collect())
        .collect();
    let point: Vec<Jet> = f.iter().map(|x| x.truncate(order)).collect();
    gauss_generic(&point, &cols, ambient, orient)
}

/// Value, first and second derivatives of an immersion at a chart point.
#[derive(Debug, Clone)]
pub struct Local {
    pub point: Vec<f64>,
    /// `jac[i]` is `∂f/∂x_i`.
    pub jac: Vec<Vec<f64>>,
    /// `hess[i][j]` is `∂²f/∂x_i∂x_j`.
    pub hess: Vec<Vec<Vec<f64>>>,
    pub orient: f64,
}

/// A parametric immersion with its sampling and differentiation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Immersion {
    pub expr: Expr,
    pub domain: Domain,
    pub resolution: usize,
    #[serde(default)]
    pub diff_mode: DiffMode,
}

impl Immersion {
    pub fn new(expr: Expr) -> Result<Immersion> {
        expr.validate()?;
        let domain = expr.domain()?;
        Ok(Immersion {
            expr,
            domain,
            resolution: DEFAULT_RESOLUTION,
            diff_mode: DiffMode::Analytic,
        })
    }

    /// Same map with a new expression (keeps sampling settings).
    pub fn derive(&self, expr: Expr) -> Result<Immersion> {
        let mut out = Immersion::new(expr)?;
        out.resolution = self.resolution;
        out.diff_mode = self.diff_mode;
        Ok(out)
    }

    pub fn with_resolution(mut self, res: usize) -> Immersion {
        self.resolution = res.max(1);
        self
    }

    pub fn with_diff_mode(mut self, mode: DiffMode) -> Immersion {
        self.diff_mode = mode;
        self
    }

    /// `Q ∘ ι_r ∘ g`.
    pub fn round(n: usize, r: f64, rotation: Rotation, diffeo: DomainDiffeo) -> Result<Immersion> {
        Immersion::new(Expr::Round {
            n,
            r,
            rotation,
            diffeo,
        })
    }

    /// `ι_r` with identity rotation and reparametrization.
    pub fn round_simple(n: usize, r: f64) -> Result<Immersion> {
        Immersion::round(n, r, Rotation::identity(n + 2), DomainDiffeo::Identity)
    }

    pub fn clifford(a: u32, b: u32) -> Result<Immersion> {
        Immersion::new(Expr::Clifford { a, b })
    }

    /// Radial graph around `-e_{n+2}`; checks the rank at every sample.
    pub fn radial_graph(n: usize, r0: f64, eps: f64, profile: Profile) -> Result<Immersion> {
        let f = Immersion::new(Expr::RadialGraph { n, r0, eps, profile })?;
        f.check_rank()?;
        Ok(f)
    }

    pub fn precompose(&self, g: DomainDiffeo) -> Result<Immersion> {
        if g.is_identity() {
            return Ok(self.clone());
        }
        self.derive(Expr::Precompose {
            inner: Box::new(self.expr.clone()),
            diffeo: g,
        })
    }

    pub fn postcompose_rotation(&self, q: Rotation) -> Result<Immersion> {
        if q.is_identity(0.0) {
            return Ok(self.clone());
        }
        self.derive(Expr::Rotate {
            rotation: q,
            inner: Box::new(self.expr.clone()),
        })
    }

    pub fn ambient(&self) -> Ambient {
        self.expr.ambient()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Dimension of the target space.
    pub fn target_dim(&self) -> usize {
        match self.ambient() {
            Ambient::Sphere => self.dim() + 2,
            Ambient::Euclidean => self.dim() + 1,
        }
    }

    pub fn samples(&self) -> Vec<ChartPoint> {
        self.domain.samples(self.resolution)
    }

    /// Jets of the map at `cp`, truncated at `order`.
    pub fn jets(&self, cp: &ChartPoint, order: usize) -> Vec<Jet> {
        let x = variables(cp.params(), order + self.expr.depth());
        let p = self.domain.point_generic(cp.chart, &x);
        self.expr.eval(&p, self.domain.chart_orientation(cp.chart))
    }

    pub fn point(&self, cp: &ChartPoint) -> Result<Vec<f64>> {
        let v: Vec<f64> = self.jets(cp, 0).iter().map(|j| j.value()).collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value at chart {} params {:?}",
                cp.chart,
                cp.params()
            )));
        }
        Ok(v)
    }

    fn point_unchecked(&self, chart: usize, x: &[f64]) -> Vec<f64> {
        self.jets(&ChartPoint::new(chart, x), 0)
            .iter()
            .map(|j| j.value())
            .collect()
    }

    /// Values of the map at all samples.
    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        let samples = self.samples();
        let pts = par_map(&samples, |cp| self.point(cp));
        pts.into_iter()
            .enumerate()
            .map(|(i, r)| {
                r.map_err(|e| Error::Degenerate {
                    sample: i,
                    detail: e.to_string(),
                })
            })
            .collect()
    }

    /// Value and derivatives up to second order, per the differentiation mode.
    pub fn local(&self, cp: &ChartPoint) -> Result<Local> {
        let orient = self.domain.chart_orientation(cp.chart);
        let out = match self.diff_mode {
            DiffMode::Analytic => {
                let f = self.jets(cp, 2);
                let n = self.dim();
                Local {
                    point: f.iter().map(|j| j.value()).collect(),
                    jac: (0..n).map(|i| f.iter().map(|j| j.d1(i)).collect()).collect(),
                    hess: (0..n)
                        .map(|a| {
                            (0..n)
                                .map(|b| f.iter().map(|j| j.d2(a, b)).collect())
                                .collect()
                        })
                        .collect(),
                    orient,
                }
            }
            DiffMode::Numeric => Local {
                point: self.point_unchecked(cp.chart, cp.params()),
                jac: self.numeric_jacobian(cp),
                hess: self.numeric_hessian(cp),
                orient,
            },
        };
        let finite = out.point.iter().all(|v| v.is_finite())
            && out.jac.iter().flatten().all(|v| v.is_finite())
            && out.hess.iter().flatten().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numeric(format!(
                "non-finite derivatives at chart {} params {:?}",
                cp.chart,
                cp.params()
            )));
        }
        Ok(out)
    }

    /// Jacobian columns from jets regardless of the differentiation mode.
    pub fn analytic_jacobian(&self, cp: &ChartPoint) -> Vec<Vec<f64>> {
        let f = self.jets(cp, 1);
        (0..self.dim())
            .map(|i| f.iter().map(|j| j.d1(i)).collect())
            .collect()
    }

    /// Central differences with one Richardson step.
    pub fn numeric_jacobian(&self, cp: &ChartPoint) -> Vec<Vec<f64>> {
        let n = self.dim();
        let x = cp.params();
        let diff = |i: usize, h: f64| -> Vec<f64> {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            let fa = self.point_unchecked(cp.chart, &a);
            let fb = self.point_unchecked(cp.chart, &b);
            fa.iter().zip(&fb).map(|(u, v)| (u - v) / (2.0 * h)).collect()
        };
        (0..n)
            .map(|i| {
                let d1 = diff(i, FD_STEP);
                let d2 = diff(i, FD_STEP / 2.0);
                d1.iter().zip(&d2).map(|(a, b)| (4.0 * b - a) / 3.0).collect()
            })
            .collect()
    }

    /// Second central differences with one Richardson step.
    pub fn numeric_hessian(&self, cp: &ChartPoint) -> Vec<Vec<Vec<f64>>> {
        let n = self.dim();
        let x = cp.params();
        let eval = |da: (usize, f64), db: (usize, f64)| -> Vec<f64> {
            let mut y = x.to_vec();
            y[da.0] += da.1;
            y[db.0] += db.1;
            self.point_unchecked(cp.chart, &y)
        };
        let second = |i: usize, j: usize, h: f64| -> Vec<f64> {
            let pp = eval((i, h), (j, h));
            let pm = eval((i, h), (j, -h));
            let mp = eval((i, -h), (j, h));
            let mm = eval((i, -h), (j, -h));
            (0..pp.len())
                .map(|k| (pp[k] - pm[k] - mp[k] + mm[k]) / (4.0 * h * h))
                .collect()
        };
        let mut out = vec![vec![Vec::new(); n]; n];
        for i in 0..n {
            for j in i..n {
                let a = second(i, j, FD_STEP_HESSIAN);
                let b = second(i, j, FD_STEP_HESSIAN / 2.0);
                let v: Vec<f64> = a.iter().zip(&b).map(|(a, b)| (4.0 * b - a) / 3.0).collect();
                out[j][i] = v.clone();
                out[i][j] = v;
            }
        }
        out
    }

    /// Ratio of smallest to largest singular value of the Jacobian.
    pub fn rank_margin(&self, cp: &ChartPoint) -> Result<f64> {
        let jac = match self.diff_mode {
            DiffMode::Analytic => self.analytic_jacobian(cp),
            DiffMode::Numeric => self.numeric_jacobian(cp),
        };
        Ok(singular_ratio(&jac))
    }

    /// Minimum rank margin over samples, or a degeneracy error naming the
    /// first sample below [`RANK_TOLERANCE`].
    pub fn check_rank(&self) -> Result<f64> {
        let samples = self.samples();
        let margins = par_map(&samples, |cp| self.rank_margin(cp));
        let mut min = f64::INFINITY;
        for (i, m) in margins.into_iter().enumerate() {
            let m = m?;
            if !(m >= RANK_TOLERANCE) {
                return Err(Error::Degenerate {
                    sample: i,
                    detail: format!("jacobian singular value ratio {m:.3e}"),
                });
            }
            min = min.min(m);
        }
        Ok(min)
    }

    /// The domain point of a sample.
    pub fn domain_point(&self, cp: &ChartPoint) -> Vec<f64> {
        self.domain.point(cp)
    }
}

/// `σ_min / σ_max` of a set of column vectors.
pub fn singular_ratio(cols: &[Vec<f64>]) -> f64 {
    let m = cols[0].len();
    let mat = DMatrix::from_fn(m, cols.len(), |i, j| cols[j][i]);
    let sv = mat.singular_values();
    let max = sv.max();
    let min = sv.min();
    if max > 0.0 && max.is_finite() {
        min / max
    } else {
        0.0
    }
}

/// `f` evaluated at a domain point (located in a chart first).
pub fn eval_at_domain_point(f: &Immersion, p: &[f64]) -> Result<Vec<f64>> {
    f.point(&f.domain.locate(p))
}

/// Cheap helper for tests and reports: the sphere point `f(cp)`.
pub fn sphere_point(f: &Immersion, cp: &ChartPoint) -> Result<SpherePoint> {
    SpherePoint::from_slice(&f.point(cp)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

    #[test]
    fn cube_atlas_covers_sphere_with_positive_orientation() {
        for n in [2usize, 3] {
            let d = Domain::sphere(n);
            let samples = d.samples(4);
            assert_eq!(samples.len(), 2 * (n + 1) * 4usize.pow(n as u32));
            for cp in samples.iter().step_by(7) {
                let lay = layout(n, 1);
                let x: Vec<Jet> = cp.params().iter().enumerate().map(|(i, &v)| Jet::variable(lay, i, v)).collect();
                let p = d.point_generic(cp.chart, &x);
                let m: Vec<Vec<f64>> = (0..=n)
                    .map(|row| {
                        let mut r: Vec<f64> = (0..n).map(|i| p[row].d1(i)).collect();
                        r.push(p[row].value());
                        r
                    })
                    .collect();
                assert!(det(&m) * d.chart_orientation(cp.chart) > 0.0);
                let back = d.locate(&d.point(cp));
                assert_eq!(back.chart, cp.chart);
                for (a, b) in back.params().iter().zip(cp.params()) {
                    assert!((a - b).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn samples_are_deterministic() {
        let d = Domain::sphere(2);
        assert_eq!(d.samples(8), d.samples(8));
        assert_eq!(Domain::Torus.samples(8).len(), 64);
    }

    #[test]
    fn round_family_evaluates_iota() {
        let f = Immersion::round_simple(2, FRAC_PI_4).unwrap();
        for cp in f.domain.samples(5) {
            let p = f.domain_point(&cp);
            let q = f.point(&cp).unwrap();
            let (s, c) = FRAC_PI_4.sin_cos();
            for k in 0..3 {
                assert!((q[k] - s * p[k]).abs() < 1e-15);
            }
            assert!((q[3] + c).abs() < 1e-15);
        }
    }

    #[test]
    fn torus_is_periodic() {
        let f = Immersion::clifford(2, 1).unwrap();
        let a = f.point(&ChartPoint::new(0, &[0.3, 1.1])).unwrap();
        let b = f.point(&ChartPoint::new(0, &[0.3 + TAU, 1.1 - TAU])).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn equatorial_jacobian_is_horizontal() {
        let f = Immersion::round_simple(2, FRAC_PI_2).unwrap();
        for cp in f.domain.samples(3) {
            for col in f.analytic_jacobian(&cp) {
                assert!(col[3].abs() < 1e-15);
            }
        }
    }

    #[test]
    fn numeric_and_analytic_derivatives_agree() {
        let f = Immersion::radial_graph(2, 0.9, 0.05, Profile::Mixed)
            .unwrap()
            .with_resolution(6);
        for cp in f.samples() {
            let a = f.analytic_jacobian(&cp);
            let b = f.numeric_jacobian(&cp);
            for (ca, cb) in a.iter().zip(&b) {
                let scale = ca.iter().map(|v| v * v).sum::<f64>().sqrt();
                for (x, y) in ca.iter().zip(cb) {
                    assert!((x - y).abs() <= 1e-6 * scale);
                }
            }
            let h = f.local(&cp).unwrap().hess;
            let hn = f.numeric_hessian(&cp);
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..4 {
                        assert!((h[i][j][k] - hn[i][j][k]).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn squeeze_diffeo_inverts_and_preserves_orientation() {
        let d = Domain::sphere(2);
        let g = DomainDiffeo::squeeze(2, 0.5).unwrap();
        for cp in d.samples(4) {
            let p = d.point(&cp);
            let q = g.apply_point(d, &p);
            let back = g.invert(d, &q).unwrap();
            for (a, b) in back.iter().zip(&p) {
                assert!((a - b).abs() < 1e-12);
            }
            assert_eq!(g.orientation_at(d, &cp), 1.0);
        }
        assert!(DomainDiffeo::squeeze(2, -1.0).is_err());
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(Immersion::round_simple(2, 0.0).is_err());
        assert!(Immersion::round_simple(2, PI).is_err());
        assert!(Immersion::clifford(0, 1).is_err());
        let f = Immersion::round_simple(2, 1.0).unwrap();
        assert!(f
            .derive(Expr::StraightLine {
                inner: Box::new(f.expr.clone()),
                r: 0.5,
                s: 0.5
            })
            .is_err());
    }
}
