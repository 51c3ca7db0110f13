//! Monitored one-parameter deformation tracks.
//!
//! A [`Track`] is a list of stages; each stage evaluates an immersion per grid
//! parameter and records curvature, `J`, rank and (optionally) embedding
//! monitors. Failing steps truncate the track and leave a [`TrackFailure`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::curvature::{interval_of_samples, radius_of, spectra};
use crate::error::{Error, Result};
use crate::immersion::{Ambient, Domain, Expr, Immersion};
use crate::operators::{
    apply_moebius, gauss_image_cap, image_circumcap, normal_translate, phi_convex, pointwise_distance, psi,
    TwistedClass,
};
use crate::rigidity::{self_intersections, IntersectionParams};
use crate::sphere::{rotation_to, Rotation, SpherePoint};
use crate::par_map;

/// Steps per stage when no grid is given.
pub const DEFAULT_STEPS: usize = 21;
/// Bisection depth used when a monitor changes sign between steps.
pub const BISECTION_DEPTH: usize = 3;
/// Distance kept from the smallest principal radius in the translate-Möbius track.
pub const ENDPOINT_MARGIN: f64 = 1e-3;
/// Radius of the round target sphere in the deformation pipeline.
pub const DEFORM_RADIUS: f64 = std::f64::consts::FRAC_PI_4;
/// Margin kept between `J` and the ends of `(0, π/2)` before projecting.
pub const DEFORM_J_MARGIN: f64 = 0.05;

/// `steps` equally spaced values from `a` to `b` inclusive.
pub fn uniform_grid(a: f64, b: f64, steps: usize) -> Vec<f64> {
    let steps = steps.max(2);
    (0..steps)
        .map(|i| a + (b - a) * i as f64 / (steps - 1) as f64)
        .collect()
}

/// One monitored step, written as a JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackEntry {
    pub stage: String,
    pub step: usize,
    pub param: f64,
    pub min_k: f64,
    pub max_k: f64,
    #[serde(rename = "J_mid")]
    pub j_mid: f64,
    #[serde(rename = "J_width")]
    pub j_width: f64,
    pub embedded: Option<bool>,
    pub rank_margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauss_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivative_ratio: Option<f64>,
}

impl TrackEntry {
    /// Smallest principal radius, from the largest curvature.
    pub fn min_radius(&self) -> f64 {
        radius_of(self.max_k)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Stage {
    pub label: String,
    pub params: Vec<f64>,
    pub entries: Vec<TrackEntry>,
    #[serde(skip)]
    pub immersions: Vec<Immersion>,
}

impl Stage {
    pub fn endpoint(&self) -> Option<&Immersion> {
        self.immersions.last()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFailure {
    pub stage: String,
    pub step: usize,
    pub param: f64,
    pub last_good_param: Option<f64>,
    pub error: String,
}

/// Round immersion a deformation ends at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTarget {
    pub class: TwistedClass,
    pub r: f64,
    pub endpoint_distance: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Track {
    pub stages: Vec<Stage>,
    pub failure: Option<TrackFailure>,
    pub target: Option<RoundTarget>,
}

impl Track {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn entries(&self) -> impl Iterator<Item = &TrackEntry> {
        self.stages.iter().flat_map(|s| s.entries.iter())
    }

    pub fn endpoint(&self) -> Option<&Immersion> {
        self.stages.iter().rev().find_map(|s| s.endpoint())
    }

    /// Largest pointwise gap between consecutive stage endpoints.
    pub fn continuity_gap(&self) -> Result<f64> {
        let mut gap: f64 = 0.0;
        for w in self.stages.windows(2) {
            if let (Some(a), Some(b)) = (w[0].immersions.last(), w[1].immersions.first()) {
                gap = gap.max(pointwise_distance(a, b)?);
            }
        }
        Ok(gap)
    }

    /// JSON lines, one per step.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in self.entries() {
            out.push_str(&serde_json::to_string(e).expect("entries serialize"));
            out.push('\n');
        }
        out
    }
}

/// Which optional monitors a stage records.
#[derive(Debug, Clone, Copy, Default)]
pub struct MonitorOptions {
    pub embedding: bool,
    /// Center of a hemisphere that must contain the Gauss image.
    pub gauss_hemisphere: bool,
    /// Compare `|d f_s(u)|` against `|d f_0(u)|`.
    pub derivative_ratio: bool,
}

struct StageContext<'a> {
    opts: MonitorOptions,
    center: Option<&'a SpherePoint>,
    reference: Option<&'a Immersion>,
}

/// Computes the monitors of one step.
pub fn monitor(f: &Immersion, stage: &str, step: usize, param: f64, opts: MonitorOptions) -> Result<TrackEntry> {
    monitor_with(
        f,
        stage,
        step,
        param,
        &StageContext {
            opts,
            center: None,
            reference: None,
        },
    )
}

fn monitor_with(f: &Immersion, stage: &str, step: usize, param: f64, ctx: &StageContext) -> Result<TrackEntry> {
    let rank_margin = f.check_rank()?;
    let samples = spectra(f)?;
    let min_k = samples.iter().map(|s| s.min_kappa()).fold(f64::INFINITY, f64::min);
    let max_k = samples.iter().map(|s| s.max_kappa()).fold(f64::NEG_INFINITY, f64::max);
    let j = interval_of_samples(&samples);
    let embedded = if ctx.opts.embedding {
        Some(self_intersections(f, &IntersectionParams::default())?.embedded)
    } else {
        None
    };
    let gauss_margin = match (ctx.opts.gauss_hemisphere, ctx.center) {
        (true, Some(c)) => Some(
            samples
                .iter()
                .map(|s| crate::sphere::dot_f64(&s.gauss, c.as_slice()))
                .fold(f64::INFINITY, f64::min),
        ),
        _ => None,
    };
    let derivative_ratio = match (ctx.opts.derivative_ratio, ctx.reference) {
        (true, Some(g)) => Some(derivative_ratio(f, g)?),
        _ => None,
    };
    Ok(TrackEntry {
        stage: stage.to_string(),
        step,
        param,
        min_k,
        max_k,
        j_mid: j.mid,
        j_width: j.width(),
        embedded,
        rank_margin,
        gauss_margin,
        derivative_ratio,
    })
}

/// `min_p min_u |d f_p(u)| / |d g_p(u)|` over the samples.
pub fn derivative_ratio(f: &Immersion, g: &Immersion) -> Result<f64> {
    let samples = f.samples();
    let n = f.dim();
    let vals = par_map(&samples, |cp| {
        let a = DMatrix::from_row_slice(n, f.target_dim(), &f.analytic_jacobian(cp).concat()).transpose();
        let b = DMatrix::from_row_slice(n, g.target_dim(), &g.analytic_jacobian(cp).concat()).transpose();
        let ga = a.transpose() * &a;
        let gb = b.transpose() * &b;
        let chol = gb.cholesky()?;
        let l_inv = chol.l().try_inverse()?;
        let m = &l_inv * ga * l_inv.transpose();
        let m = (&m + m.transpose()) * 0.5;
        Some(m.symmetric_eigenvalues().min().max(0.0).sqrt())
    });
    let mut best = f64::INFINITY;
    for (i, v) in vals.into_iter().enumerate() {
        best = best.min(v.ok_or_else(|| Error::Degenerate {
            sample: i,
            detail: "reference differential is singular".into(),
        })?);
    }
    Ok(best)
}

/// Runs one stage. Stops at the first failing step, bisecting toward the last
/// good parameter, and refines the grid where the smallest curvature changes sign.
fn run_stage<F>(track: &mut Track, label: &str, grid: &[f64], ctx: &StageContext, build: F) -> bool
where
    F: Fn(f64) -> Result<Immersion>,
{
    let eval = |param: f64, step: usize| -> Result<(Immersion, TrackEntry)> {
        let f = build(param)?;
        let e = monitor_with(&f, label, step, param, ctx)?;
        Ok((f, e))
    };
    let mut stage = Stage {
        label: label.to_string(),
        ..Stage::default()
    };
    let mut failure = None;
    for &param in grid {
        match eval(param, stage.entries.len()) {
            Ok((f, e)) => {
                if let Some(prev) = stage.entries.last().cloned() {
                    if prev.min_k.signum() != e.min_k.signum() {
                        refine_sign_change(&mut stage, &eval, prev.param, param, BISECTION_DEPTH);
                    }
                }
                let mut e = e;
                e.step = stage.entries.len();
                stage.params.push(param);
                stage.entries.push(e);
                stage.immersions.push(f);
            }
            Err(err) => {
                let last_good = stage.params.last().copied();
                let mut good = last_good;
                if let Some(mut lo) = last_good {
                    let mut hi = param;
                    for _ in 0..BISECTION_DEPTH {
                        let mid = 0.5 * (lo + hi);
                        if eval(mid, 0).is_ok() {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    good = Some(lo);
                }
                failure = Some(TrackFailure {
                    stage: label.to_string(),
                    step: stage.entries.len(),
                    param,
                    last_good_param: good,
                    error: err.to_string(),
                });
                break;
            }
        }
    }
    track.stages.push(stage);
    let ok = failure.is_none();
    track.failure = failure;
    ok
}

fn refine_sign_change<E>(stage: &mut Stage, eval: &E, a: f64, b: f64, depth: usize)
where
    E: Fn(f64, usize) -> Result<(Immersion, TrackEntry)>,
{
    if depth == 0 {
        return;
    }
    let mid = 0.5 * (a + b);
    let Ok((f, mut e)) = eval(mid, 0) else {
        return;
    };
    let sa = stage.entries.last().map(|x| x.min_k.signum()).unwrap_or(0.0);
    e.step = stage.entries.len();
    let left = sa != e.min_k.signum();
    if left {
        refine_sign_change(stage, eval, a, mid, depth - 1);
    }
    e.step = stage.entries.len();
    stage.params.push(mid);
    stage.entries.push(e);
    stage.immersions.push(f);
    if !left {
        refine_sign_change(stage, eval, mid, b, depth - 1);
    }
}

fn base_context() -> StageContext<'static> {
    StageContext {
        opts: MonitorOptions::default(),
        center: None,
        reference: None,
    }
}

fn require_sphere(f: &Immersion) -> Result<()> {
    if f.ambient() != Ambient::Sphere {
        return Err(Error::Domain("track needs a hypersurface of the sphere".into()));
    }
    Ok(())
}

/// `r ↦ f_r` along `r_path`.
pub fn track_normal_translate(f: &Immersion, r_path: &[f64]) -> Result<Track> {
    require_sphere(f)?;
    let mut track = Track::default();
    run_stage(&mut track, "normal-translate", r_path, &base_context(), |r| normal_translate(f, r));
    Ok(track)
}

/// `s ↦ M_s ∘ f` toward the circumcenter of `f`, `s` from 1 down.
pub fn track_moebius(f: &Immersion, s_grid: &[f64]) -> Result<Track> {
    require_sphere(f)?;
    crate::operators::require_convex(&spectra(f)?, 0.0)?;
    let cap = image_circumcap(f)?;
    let mut track = Track::default();
    run_stage(&mut track, "moebius", s_grid, &base_context(), |s| apply_moebius(f, &cap.center, s));
    Ok(track)
}

/// Whether the smallest curvature strictly increases along the track.
pub fn mu_strictly_increasing(track: &Track) -> bool {
    let e: Vec<&TrackEntry> = track.entries().collect();
    e.windows(2).all(|w| w[1].min_k > w[0].min_k)
}

/// Largest `t` admitted by the translate-Möbius track: the smallest principal
/// radius of `f` minus [`ENDPOINT_MARGIN`].
pub fn translate_moebius_limit(f: &Immersion) -> Result<f64> {
    let samples = spectra(f)?;
    crate::operators::require_convex(&samples, 0.0)?;
    let a = samples
        .iter()
        .flat_map(|s| s.radii.iter().copied())
        .fold(f64::INFINITY, f64::min);
    Ok(a - ENDPOINT_MARGIN)
}

/// `t ↦ (M_s ∘ f_t)_{-t}` with the contraction centered at the circumcenter of `f`.
pub fn track_translate_moebius(f: &Immersion, t_grid: &[f64], s: f64) -> Result<Track> {
    require_sphere(f)?;
    let limit = translate_moebius_limit(f)?;
    if let Some(&t) = t_grid.iter().find(|&&t| t > limit + 1e-15 || t < 0.0) {
        return Err(Error::Domain(format!(
            "t = {t} outside [0, {limit}] (smallest radius minus {ENDPOINT_MARGIN})"
        )));
    }
    let cap = image_circumcap(f)?;
    let mut track = Track::default();
    run_stage(&mut track, "translate-moebius", t_grid, &base_context(), |t| {
        let ft = normal_translate(f, t)?;
        let m = apply_moebius(&ft, &cap.center, s)?;
        normal_translate(&m, -t)
    });
    Ok(track)
}

/// `s ↦ (1 - s) φ + s j_r ∘ ν_φ` for a Euclidean immersion with negative curvatures.
pub fn track_euclidean_straightline(phi: &Immersion, r: f64, s_grid: &[f64]) -> Result<Track> {
    if phi.ambient() != Ambient::Euclidean {
        return Err(Error::Domain("straight-line track needs a Euclidean immersion".into()));
    }
    let samples = spectra(phi)?;
    if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.max_kappa() >= 0.0) {
        return Err(Error::NotConvex {
            kappa: s.max_kappa(),
            sample: i,
        });
    }
    let mut track = Track::default();
    run_stage(&mut track, "straight-line", s_grid, &base_context(), |s| {
        phi.derive(Expr::StraightLine {
            inner: Box::new(phi.expr.clone()),
            r,
            s,
        })
    });
    Ok(track)
}

fn all_convex(track: &Track) -> bool {
    track.entries().all(|e| e.min_k > 0.0)
}

/// Deforms a locally convex hemispherical `f` to a round hypersphere:
/// Möbius contraction until `J ⊂ (0, π/2)` with margin, then the straight-line
/// homotopy of the central projection, lifted back to the sphere.
pub fn deform_to_round(f: &Immersion) -> Result<Track> {
    require_sphere(f)?;
    if f.domain == Domain::Torus {
        return Err(Error::Domain("deformation needs a sphere domain".into()));
    }
    crate::operators::require_convex(&spectra(f)?, 0.0)?;
    let cap = image_circumcap(f)?;
    let mut track = Track::default();
    let ctx = base_context();

    // stage (i): shrink until the radii leave room on both sides
    let mut shrunk: Option<Immersion> = None;
    let mut grid = Vec::new();
    for s in crate::operators::s_grid(0.2, 0.05) {
        grid.push(s);
        let g = apply_moebius(f, &cap.center, s)?;
        let j = interval_of_samples(&spectra(&g)?);
        if j.lo() >= DEFORM_J_MARGIN && j.hi() <= std::f64::consts::FRAC_PI_2 - DEFORM_J_MARGIN {
            shrunk = Some(g);
            break;
        }
    }
    if !run_stage(&mut track, "moebius", &grid, &ctx, |s| apply_moebius(f, &cap.center, s)) {
        return Ok(track);
    }
    let Some(fs) = shrunk else {
        track.failure = Some(TrackFailure {
            stage: "moebius".into(),
            step: grid.len(),
            param: *grid.last().unwrap_or(&1.0),
            last_good_param: grid.last().copied(),
            error: "radii interval did not enter (0, pi/2) with margin".into(),
        });
        return Ok(track);
    };

    // stage (ii): straight line between the central projection and j_r ∘ ν
    let class = phi_convex(&fs)?;
    let q = class.rotation.clone();
    let r = DEFORM_RADIUS;
    let projected = Expr::CentralProjection {
        inner: Box::new(Expr::Rotate {
            rotation: q.inverse(),
            inner: Box::new(fs.expr.clone()),
        }),
    };
    let lifted = |s: f64| {
        fs.derive(Expr::Rotate {
            rotation: q.clone(),
            inner: Box::new(Expr::CentralLift {
                inner: Box::new(Expr::StraightLine {
                    inner: Box::new(projected.clone()),
                    r,
                    s,
                }),
            }),
        })
    };
    let grid = uniform_grid(0.0, 1.0, DEFAULT_STEPS);
    if !run_stage(&mut track, "straight-line", &grid, &ctx, lifted) {
        return Ok(track);
    }

    // stage (iii): the round hypersphere itself
    let round = psi(&q, &class.diffeo, r)?.with_resolution(f.resolution);
    if !run_stage(&mut track, "round", &[1.0], &ctx, |_| Ok(round.clone())) {
        return Ok(track);
    }
    let end = track.stages[1].endpoint().expect("completed stage");
    let endpoint_distance = pointwise_distance(end, &round)?;
    if !all_convex(&track) {
        track.failure = Some(TrackFailure {
            stage: "monitor".into(),
            step: 0,
            param: 0.0,
            last_good_param: None,
            error: "local convexity lost along the pipeline".into(),
        });
    }
    track.target = Some(RoundTarget {
        class,
        r,
        endpoint_distance,
    });
    Ok(track)
}

/// `s ↦ Q ∘ ζ_s ∘ Q⁻¹ ∘ f` with `Q` centering the Gauss image of `f`.
pub fn track_zeta(f: &Immersion, s_grid: &[f64]) -> Result<Track> {
    require_sphere(f)?;
    let cap = gauss_image_cap(f)?;
    let q: Rotation = rotation_to(&cap.center);
    let build = |s: f64| {
        f.derive(Expr::Rotate {
            rotation: q.clone(),
            inner: Box::new(Expr::Zeta {
                inner: Box::new(Expr::Rotate {
                    rotation: q.inverse(),
                    inner: Box::new(f.expr.clone()),
                }),
                s,
            }),
        })
    };
    let ctx = StageContext {
        opts: MonitorOptions {
            embedding: true,
            gauss_hemisphere: true,
            derivative_ratio: true,
        },
        center: Some(&cap.center),
        reference: Some(f),
    };
    let mut track = Track::default();
    run_stage(&mut track, "zeta", s_grid, &ctx, build);
    Ok(track)
}

/// Radius of the Gauss-image cap, the `r` of the derivative bound `cos r`.
pub fn zeta_cap_radius(f: &Immersion) -> Result<f64> {
    Ok(gauss_image_cap(f)?.radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::immersion::Profile;
    use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, FRAC_PI_6};

    #[test]
    fn round_translate_slides_linearly() {
        let f = Immersion::round_simple(2, FRAC_PI_3).unwrap().with_resolution(6);
        let t = track_normal_translate(&f, &uniform_grid(0.0, FRAC_PI_6, 7)).unwrap();
        assert!(t.completed());
        for e in t.entries() {
            assert!((e.j_mid - (FRAC_PI_3 - e.param)).abs() < 1e-8);
        }
    }

    #[test]
    fn clifford_translate_fails_at_quarter() {
        let f = Immersion::clifford(1, 1).unwrap().with_resolution(8);
        let t = track_normal_translate(&f, &uniform_grid(0.0, FRAC_PI_4, 5)).unwrap();
        let fail = t.failure.expect("radius hit");
        assert_eq!(fail.step, 4);
        assert!(fail.error.contains("principal radius"));
    }

    #[test]
    fn translate_moebius_at_unit_scale_is_constant() {
        let f = Immersion::round_simple(2, 0.6).unwrap().with_resolution(6);
        let limit = translate_moebius_limit(&f).unwrap();
        let t = track_translate_moebius(&f, &uniform_grid(0.0, limit, 4), 1.0).unwrap();
        assert!(t.completed());
        for g in &t.stages[0].immersions {
            assert!(pointwise_distance(g, &f).unwrap() < 1e-8);
        }
    }

    #[test]
    fn deform_small_radial_graph() {
        let f = Immersion::radial_graph(2, FRAC_PI_4, 1e-2, Profile::Mixed)
            .unwrap()
            .with_resolution(8);
        let t = deform_to_round(&f).unwrap();
        assert!(t.completed(), "{:?}", t.failure);
        assert!(t.target.as_ref().unwrap().endpoint_distance < 1e-5);
        assert!(t.continuity_gap().unwrap() < 1e-8);
        assert!(t.entries().all(|e| e.min_k > 0.0));
    }

    #[test]
    fn zeta_track_round() {
        let f = Immersion::round_simple(2, FRAC_PI_3).unwrap().with_resolution(8);
        let t = track_zeta(&f, &uniform_grid(0.0, 1.0, 5)).unwrap();
        assert!(t.completed(), "{:?}", t.failure);
        assert!(t.entries().all(|e| e.embedded == Some(true)));
        assert!(t.entries().all(|e| e.gauss_margin.unwrap() > 0.0));
        let line = t.to_jsonl();
        assert_eq!(line.lines().count(), 5);
        assert!(line.contains("\"J_mid\""));
    }
}
