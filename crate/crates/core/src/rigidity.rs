//! Embeddedness and covering checks: self-intersection detection with
//! multiplicity counts, deck groups of spherical space forms, preimage
//! components of an embedded hypersurface, and symmetry factors of wrapped
//! families.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curvature::classify;
use crate::error::{Error, Result};
use crate::immersion::{ChartPoint, Domain, Expr, Immersion};
use crate::spatial::{SpatialHash, UnionFind};
use crate::sphere::Rotation;
use crate::{par_map, par_range};

/// Knobs of the self-intersection detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntersectionParams {
    /// Ambient distance below which two sheets count as intersecting.
    pub eps: f64,
    /// Minimum parameter separation, in grid hops, of a genuine pair.
    pub delta_hops: f64,
    /// Cap on target points used for multiplicity counting.
    pub max_targets: usize,
}

impl Default for IntersectionParams {
    fn default() -> Self {
        IntersectionParams {
            eps: 1e-3,
            delta_hops: 5.0,
            max_targets: 1500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionPair {
    pub x: ChartPoint,
    pub y: ChartPoint,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Representative pairs (at most 16 are kept).
    pub pairs: Vec<IntersectionPair>,
    pub pair_count: usize,
    pub min_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionReport {
    pub clusters: Vec<Cluster>,
    /// Pairs that refined to within `10 eps` but not `eps`.
    pub suspects: usize,
    pub m: usize,
    pub embedded: bool,
    pub median_spacing: f64,
    pub warnings: Vec<String>,
}

/// Sampled image of an immersion with its domain-grid adjacency.
#[derive(Debug, Clone)]
pub struct SampledHypersurface {
    pub samples: Vec<ChartPoint>,
    pub points: Vec<Vec<f64>>,
    pub edges: Vec<(usize, usize)>,
}

/// Everything the detectors need about the samples of `f`.
struct SampleData {
    samples: Vec<ChartPoint>,
    points: Vec<Vec<f64>>,
    domain_points: Vec<Vec<f64>>,
    spacing: Vec<f64>,
    median_spacing: f64,
}

fn chart_step(domain: Domain, res: usize) -> f64 {
    match domain {
        Domain::Sphere { .. } => 2.0 / res as f64,
        Domain::Torus => std::f64::consts::TAU / res as f64,
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn sample_data(f: &Immersion) -> Result<SampleData> {
    let samples = f.samples();
    let step = chart_step(f.domain, f.resolution);
    let n = f.dim();
    let rows = par_map(&samples, |cp| -> Result<(Vec<f64>, f64)> {
        let p = f.point(cp)?;
        let mut s: f64 = 0.0;
        for k in 0..n {
            let mut x = cp.params().to_vec();
            x[k] += step;
            let q = f.point(&ChartPoint::new(cp.chart, &x))?;
            s = s.max(dist(&p, &q));
        }
        Ok((p, s))
    });
    let mut points = Vec::with_capacity(samples.len());
    let mut spacing = Vec::with_capacity(samples.len());
    for (i, r) in rows.into_iter().enumerate() {
        let (p, s) = r.map_err(|e| crate::curvature::with_sample(e, i))?;
        points.push(p);
        spacing.push(s);
    }
    let mut sorted = spacing.clone();
    sorted.sort_by(f64::total_cmp);
    let median_spacing = sorted[sorted.len() / 2];
    let domain_points = samples.iter().map(|cp| f.domain.point(cp)).collect();
    Ok(SampleData {
        samples,
        points,
        domain_points,
        spacing,
        median_spacing,
    })
}

/// Evaluates `g f` and its chart Jacobian at `cp`.
fn value_and_jacobian(f: &Immersion, cp: &ChartPoint, g: Option<&Rotation>) -> (Vec<f64>, DMatrix<f64>) {
    let jets = f.jets(cp, 1);
    let m = jets.len();
    let n = f.dim();
    let mut v: Vec<f64> = jets.iter().map(|j| j.value()).collect();
    let mut jac = DMatrix::from_fn(m, n, |i, k| jets[i].d1(k));
    if let Some(g) = g {
        v = g.apply_vec(&DVector::from_vec(v)).as_slice().to_vec();
        jac = g.matrix() * jac;
    }
    (v, jac)
}

fn shift(cp: &ChartPoint, delta: &[f64]) -> ChartPoint {
    let x: Vec<f64> = cp.params().iter().zip(delta).map(|(a, b)| a + b).collect();
    ChartPoint::new(cp.chart, &x)
}

/// Levenberg-Marquardt on `|f(a) - g f(b)|²` over both chart points.
fn refine_pair(
    f: &Immersion,
    a: ChartPoint,
    b: ChartPoint,
    g: Option<&Rotation>,
    iters: usize,
) -> (ChartPoint, ChartPoint, f64) {
    let n = f.dim();
    let mut a = a;
    let mut b = b;
    let mut lambda = 1e-3;
    let eval = |a: &ChartPoint, b: &ChartPoint| {
        let (fa, ja) = value_and_jacobian(f, a, None);
        let (fb, jb) = value_and_jacobian(f, b, g);
        let r = DVector::from_iterator(fa.len(), fa.iter().zip(&fb).map(|(x, y)| x - y));
        let mut jac = DMatrix::zeros(fa.len(), 2 * n);
        jac.view_mut((0, 0), (fa.len(), n)).copy_from(&ja);
        jac.view_mut((0, n), (fa.len(), n)).copy_from(&(-jb));
        (r, jac)
    };
    let (mut r, mut jac) = eval(&a, &b);
    let mut cost = r.norm_squared();
    for _ in 0..iters {
        if !cost.is_finite() || cost.sqrt() < 1e-14 {
            break;
        }
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let mut sys = jtj.clone();
        for i in 0..2 * n {
            sys[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
        }
        let Some(step) = sys.lu().solve(&(-grad)) else {
            break;
        };
        let na = shift(&a, &step.as_slice()[..n]);
        let nb = shift(&b, &step.as_slice()[n..]);
        let (r2, jac2) = eval(&na, &nb);
        let c2 = r2.norm_squared();
        if c2.is_finite() && c2 < cost {
            a = na;
            b = nb;
            r = r2;
            jac = jac2;
            cost = c2;
            lambda = (lambda / 3.0).max(1e-12);
        } else {
            lambda *= 4.0;
        }
    }
    let a = f.domain.locate(&f.domain.point(&a));
    let b = f.domain.locate(&f.domain.point(&b));
    (a, b, cost.sqrt())
}

/// Levenberg-Marquardt on `|g f(y) - target|²`.
fn refine_to_target(f: &Immersion, y: ChartPoint, g: Option<&Rotation>, target: &[f64], iters: usize) -> (ChartPoint, f64) {
    let n = f.dim();
    let mut y = y;
    let mut lambda = 1e-3;
    let eval = |y: &ChartPoint| {
        let (fy, jy) = value_and_jacobian(f, y, g);
        let r = DVector::from_iterator(fy.len(), fy.iter().zip(target).map(|(a, b)| a - b));
        (r, jy)
    };
    let (mut r, mut jac) = eval(&y);
    let mut cost = r.norm_squared();
    for _ in 0..iters {
        if !cost.is_finite() || cost.sqrt() < 1e-14 {
            break;
        }
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let mut sys = jtj.clone();
        for i in 0..n {
            sys[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
        }
        let Some(step) = sys.lu().solve(&(-grad)) else {
            break;
        };
        let ny = shift(&y, step.as_slice());
        let (r2, j2) = eval(&ny);
        let c2 = r2.norm_squared();
        if c2.is_finite() && c2 < cost {
            y = ny;
            r = r2;
            jac = j2;
            cost = c2;
            lambda = (lambda / 3.0).max(1e-12);
        } else {
            lambda *= 4.0;
        }
    }
    (f.domain.locate(&f.domain.point(&y)), cost.sqrt())
}

/// Images `g f(x_j)` of all samples under all group elements.
struct Cloud {
    points: Vec<Vec<f64>>,
    sample: Vec<usize>,
    elem: Vec<usize>,
}

fn build_cloud(data: &SampleData, group: &[Rotation]) -> Cloud {
    let mut points = Vec::with_capacity(group.len() * data.points.len());
    let mut sample = Vec::with_capacity(points.capacity());
    let mut elem = Vec::with_capacity(points.capacity());
    for (gi, g) in group.iter().enumerate() {
        for (j, p) in data.points.iter().enumerate() {
            points.push(g.apply_vec(&DVector::from_column_slice(p)).as_slice().to_vec());
            sample.push(j);
            elem.push(gi);
        }
    }
    Cloud { points, sample, elem }
}

/// Embedding of domain points into Euclidean space (angles go on circles).
fn domain_embedding(domain: Domain, p: &[f64]) -> Vec<f64> {
    match domain {
        Domain::Sphere { .. } => p.to_vec(),
        Domain::Torus => vec![p[0].cos(), p[0].sin(), p[1].cos(), p[1].sin()],
    }
}

struct CloudAnalysis {
    pairs: Vec<(usize, usize, usize, IntersectionPair)>,
    suspects: usize,
    targets: Vec<usize>,
}

/// Finds sample pairs `(i, (g, j))` whose images meet: `f(x_i) ≈ g f(x_j)`
/// with `x_i` and `x_j` far apart in the domain when `g` is the identity.
fn find_pairs(f: &Immersion, data: &SampleData, group: &[Rotation], cloud: &Cloud, params: &IntersectionParams) -> CloudAnalysis {
    let hash = SpatialHash::new(&cloud.points, 2.0 * data.median_spacing);
    let res = f.resolution;
    let candidates: Vec<Vec<(usize, f64)>> = par_range(data.points.len(), |i| {
        let radius = params.eps.max(1.5 * data.spacing[i]);
        hash.within(&data.points[i], radius)
            .into_iter()
            .filter(|&e| {
                let j = cloud.sample[e];
                if cloud.elem[e] == 0 {
                    j != i && f.domain.hops(&data.domain_points[i], &data.domain_points[j], res) > params.delta_hops
                } else {
                    true
                }
            })
            .map(|e| (e, dist(&data.points[i], &cloud.points[e])))
            .collect()
    });
    // symmetric identity pairs are collected once
    let mut list: Vec<(usize, usize, f64)> = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        for &(e, d) in c {
            if cloud.elem[e] == 0 {
                let j = cloud.sample[e];
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                list.push((a, b, d));
            } else {
                list.push((i, e, d));
            }
        }
    }
    list.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    list.dedup_by(|x, y| x.0 == y.0 && x.1 == y.1);
    // identity pairs are stored as sample indices, other pairs as cloud entries
    let mut hit = vec![false; data.points.len()];
    let mut exact = Vec::new();
    let mut pending = Vec::new();
    for &(a, b, d) in &list {
        if d < params.eps {
            exact.push((a, b, d));
            hit[a] = true;
            let (j, _) = resolve(b, cloud, group.len());
            hit[j] = true;
        } else {
            pending.push((a, b));
        }
    }
    let pending: Vec<(usize, usize)> = pending
        .into_iter()
        .filter(|&(a, b)| {
            let (j, _) = resolve(b, cloud, group.len());
            !hit[a] && !hit[j]
        })
        .collect();
    let refined = par_map(&pending, |&(a, b)| {
        let (j, gi) = resolve(b, cloud, group.len());
        let g = if gi == 0 { None } else { Some(&group[gi]) };
        let (x, y, d) = refine_pair(f, data.samples[a], data.samples[j], g, 20);
        let far = gi != 0
            || f.domain.hops(&f.domain.point(&x), &f.domain.point(&y), res) > 0.5 * params.delta_hops;
        (a, j, gi, x, y, d, far)
    });
    let mut pairs = Vec::new();
    for (a, b, d) in exact {
        let (j, gi) = resolve(b, cloud, group.len());
        pairs.push((
            a,
            j,
            gi,
            IntersectionPair {
                x: data.samples[a],
                y: data.samples[j],
                distance: d,
            },
        ));
    }
    let mut suspects = 0;
    for (a, j, gi, x, y, d, far) in refined {
        if !far {
            continue;
        }
        if d < params.eps {
            pairs.push((a, j, gi, IntersectionPair { x, y, distance: d }));
        } else if d < 10.0 * params.eps {
            suspects += 1;
        }
    }
    let mut targets: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    targets.sort_unstable();
    targets.dedup();
    CloudAnalysis {
        pairs,
        suspects,
        targets,
    }
}

/// Splits a pair key into `(sample j, group element)`.
fn resolve(b: usize, cloud: &Cloud, group_len: usize) -> (usize, usize) {
    if group_len == 1 {
        (b, 0)
    } else {
        (cloud.sample[b], cloud.elem[b])
    }
}

/// Number of separated preimage sheets of `target` under `x ↦ g f(x)`.
fn count_preimages(
    f: &Immersion,
    data: &SampleData,
    group: &[Rotation],
    cloud: &Cloud,
    hash: &SpatialHash,
    target: &[f64],
    radius: f64,
    params: &IntersectionParams,
) -> usize {
    let entries = hash.within(target, radius);
    if entries.is_empty() {
        return 0;
    }
    // single-linkage grouping in the domain
    let mut uf = UnionFind::new(entries.len());
    for a in 0..entries.len() {
        for b in a + 1..entries.len() {
            let pa = &data.domain_points[cloud.sample[entries[a]]];
            let pb = &data.domain_points[cloud.sample[entries[b]]];
            if f.domain.hops(pa, pb, f.resolution) <= params.delta_hops {
                uf.union(a, b);
            }
        }
    }
    let (labels, count) = uf.labels();
    let mut best: Vec<Option<(usize, f64)>> = vec![None; count];
    for (k, &e) in entries.iter().enumerate() {
        let d = dist(&cloud.points[e], target);
        if best[labels[k]].map_or(true, |b| d < b.1) {
            best[labels[k]] = Some((e, d));
        }
    }
    let mut found: Vec<Vec<f64>> = Vec::new();
    for (e, d) in best.into_iter().flatten() {
        let (cp, d) = if d < params.eps {
            (data.samples[cloud.sample[e]], d)
        } else {
            let gi = cloud.elem[e];
            let g = if gi == 0 { None } else { Some(&group[gi]) };
            refine_to_target(f, data.samples[cloud.sample[e]], g, target, 20)
        };
        if d < params.eps {
            let p = f.domain.point(&cp);
            // refined preimages of different groups may coincide
            if found
                .iter()
                .all(|q| f.domain.hops(q, &p, f.resolution) > 0.5 * params.delta_hops)
            {
                found.push(p);
            }
        }
    }
    found.len()
}

fn multiplicity(
    f: &Immersion,
    data: &SampleData,
    group: &[Rotation],
    cloud: &Cloud,
    targets: &[usize],
    params: &IntersectionParams,
) -> usize {
    if targets.is_empty() {
        return 1;
    }
    let hash = SpatialHash::new(&cloud.points, 2.0 * data.median_spacing);
    let stride = targets.len().div_ceil(params.max_targets.max(1));
    let picked: Vec<usize> = targets.iter().step_by(stride).copied().collect();
    let counts = par_map(&picked, |&t| {
        let radius = params.eps.max(2.0 * data.spacing[t].max(data.median_spacing));
        count_preimages(f, data, group, cloud, &hash, &data.points[t], radius, params)
    });
    counts.into_iter().max().unwrap_or(1).max(1)
}

fn resolution_warnings(data: &SampleData, params: &IntersectionParams) -> Vec<String> {
    if data.median_spacing > params.eps {
        vec![format!(
            "resolution-insufficient: median sample spacing {:.3e} exceeds eps {:.3e}",
            data.median_spacing, params.eps
        )]
    } else {
        Vec::new()
    }
}

/// Detects self-intersections of the sampled image of `f`.
pub fn self_intersections(f: &Immersion, params: &IntersectionParams) -> Result<IntersectionReport> {
    let data = sample_data(f)?;
    let group = vec![Rotation::identity(f.target_dim())];
    let cloud = build_cloud(&data, &group);
    let analysis = find_pairs(f, &data, &group, &cloud, params);
    let m = multiplicity(f, &data, &group, &cloud, &analysis.targets, params);
    let clusters = cluster_pairs(f, &data, &analysis.pairs);
    Ok(IntersectionReport {
        embedded: clusters.is_empty(),
        m: if clusters.is_empty() { 1 } else { m.max(2) },
        clusters,
        suspects: analysis.suspects,
        median_spacing: data.median_spacing,
        warnings: resolution_warnings(&data, params),
    })
}

fn cluster_pairs(f: &Immersion, data: &SampleData, pairs: &[(usize, usize, usize, IntersectionPair)]) -> Vec<Cluster> {
    if pairs.is_empty() {
        return Vec::new();
    }
    let mut involved: Vec<usize> = pairs.iter().flat_map(|p| [p.0, p.1]).collect();
    involved.sort_unstable();
    involved.dedup();
    let index: HashMap<usize, usize> = involved.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut uf = UnionFind::new(involved.len());
    for p in pairs {
        uf.union(index[&p.0], index[&p.1]);
    }
    let emb: Vec<Vec<f64>> = involved
        .iter()
        .map(|&i| domain_embedding(f.domain, &data.domain_points[i]))
        .collect();
    let link = 2.0 * f.domain.grid_step(f.resolution);
    let hash = SpatialHash::new(&emb, link);
    for (k, e) in emb.iter().enumerate() {
        for other in hash.within(e, link) {
            uf.union(k, other);
        }
    }
    let (labels, count) = uf.labels();
    let mut clusters: Vec<Cluster> = (0..count)
        .map(|_| Cluster {
            pairs: Vec::new(),
            pair_count: 0,
            min_distance: f64::INFINITY,
        })
        .collect();
    for p in pairs {
        let c = &mut clusters[labels[index[&p.0]]];
        c.pair_count += 1;
        c.min_distance = c.min_distance.min(p.3.distance);
        if c.pairs.len() < 16 {
            c.pairs.push(p.3.clone());
        }
    }
    clusters
}

/// Self-intersections of the dual.
pub fn dual_embedding_check(f: &Immersion, params: &IntersectionParams) -> Result<IntersectionReport> {
    let d = crate::operators::dual(f)?;
    self_intersections(&d, params)
}

/// Image samples with edges between domain neighbors.
pub fn sampled_hypersurface(f: &Immersion) -> Result<SampledHypersurface> {
    let samples = f.samples();
    let points = f.points()?;
    let emb: Vec<Vec<f64>> = samples
        .iter()
        .map(|cp| domain_embedding(f.domain, &f.domain.point(cp)))
        .collect();
    let link = 1.5 * f.domain.grid_step(f.resolution);
    let hash = SpatialHash::new(&emb, link);
    let mut edges = Vec::new();
    for (i, e) in emb.iter().enumerate() {
        for j in hash.within(e, link) {
            if j > i {
                edges.push((i, j));
            }
        }
    }
    Ok(SampledHypersurface {
        samples,
        points,
        edges,
    })
}

/// A finite group of rotations acting freely on the unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeckGroup {
    pub name: String,
    pub elements: Vec<Rotation>,
}

impl DeckGroup {
    pub fn trivial(dim: usize) -> DeckGroup {
        DeckGroup {
            name: "trivial".into(),
            elements: vec![Rotation::identity(dim)],
        }
    }

    /// `{I, -I}` on ℝ^{dim}; needs `dim` even.
    pub fn antipodal(dim: usize) -> Result<DeckGroup> {
        if dim % 2 != 0 {
            return Err(Error::Domain(format!(
                "-I is not a rotation of R^{dim} (odd dimension)"
            )));
        }
        let minus = Rotation::from_matrix(-DMatrix::<f64>::identity(dim, dim))?;
        DeckGroup::new("antipodal", vec![Rotation::identity(dim), minus])
    }

    /// Cyclic group generated by rotations by `2π/p` and `2πq/p` in the
    /// `(e_1, e_2)` and `(e_3, e_4)` planes of ℝ⁴.
    pub fn lens(p: u32, q: u32) -> Result<DeckGroup> {
        if p < 2 {
            return Err(Error::Domain("lens space order must be at least 2".into()));
        }
        let tau = std::f64::consts::TAU;
        let gen = Rotation::plane(4, 0, 1, tau / f64::from(p))
            .compose(&Rotation::plane(4, 2, 3, tau * f64::from(q) / f64::from(p)));
        let mut elements = vec![Rotation::identity(4)];
        for _ in 1..p {
            let next = elements.last().expect("nonempty").compose(&gen);
            elements.push(next);
        }
        DeckGroup::new(&format!("lens({p},{q})"), elements)
    }

    /// Validates identity, closure and free action.
    pub fn new(name: &str, elements: Vec<Rotation>) -> Result<DeckGroup> {
        let g = DeckGroup {
            name: name.to_string(),
            elements,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    fn index_of(&self, r: &Rotation) -> Option<usize> {
        self.elements.iter().position(|e| e.distance(r) <= 1e-10)
    }

    pub fn validate(&self) -> Result<()> {
        if self.elements.is_empty() {
            return Err(Error::Domain("empty group".into()));
        }
        let dim = self.dim();
        if self.index_of(&Rotation::identity(dim)).is_none() {
            return Err(Error::Domain("group lacks the identity".into()));
        }
        for a in &self.elements {
            for b in &self.elements {
                if self.index_of(&a.compose(b)).is_none() {
                    return Err(Error::Domain("element set is not closed under products".into()));
                }
            }
        }
        for (i, g) in self.elements.iter().enumerate() {
            if g.is_identity(1e-10) {
                continue;
            }
            let margin = fixed_point_margin(g);
            if margin < 1e-9 {
                return Err(Error::NonFreeAction {
                    element: i,
                    detail: format!("smallest singular value of g - I is {margin:.3e}"),
                });
            }
        }
        Ok(())
    }

    /// Smallest displacement `|g x - x|` over a random sample of unit vectors,
    /// minimized over non-identity elements.
    pub fn sampled_displacement(&self, count: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = self.dim();
        let mut best = f64::INFINITY;
        for g in self.elements.iter().filter(|g| !g.is_identity(1e-10)) {
            for _ in 0..count {
                let v = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
                let v = &v / v.norm();
                best = best.min((g.apply_vec(&v) - &v).norm());
            }
            // the minimizer is the singular vector of g - I
            let m = g.matrix() - DMatrix::<f64>::identity(dim, dim);
            let svd = m.clone().svd(false, true);
            if let Some(vt) = svd.v_t {
                let k = svd
                    .singular_values
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|x| x.0)
                    .unwrap_or(0);
                let v = vt.row(k).transpose();
                best = best.min((g.apply_vec(&v) - &v).norm());
            }
        }
        best
    }
}

/// Smallest singular value of `g - I`; zero exactly when `g` fixes a unit vector.
pub fn fixed_point_margin(g: &Rotation) -> f64 {
    let dim = g.dim();
    (g.matrix() - DMatrix::<f64>::identity(dim, dim))
        .singular_values()
        .min()
}

/// Component count of the preimage of an embedded hypersurface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub k: usize,
    pub gc_order: usize,
    pub gamma_order: usize,
    pub identity_holds: bool,
    pub eps_link: f64,
}

fn components(points: &[Vec<f64>], eps: f64) -> (Vec<usize>, usize) {
    let hash = SpatialHash::new(points, eps);
    let mut uf = UnionFind::new(points.len());
    for (i, p) in points.iter().enumerate() {
        for j in hash.within(p, eps) {
            if j > i {
                uf.union(i, j);
            }
        }
    }
    uf.labels()
}

/// Components of `∪_g g f(N)` and the stabilizer of one component.
pub fn preimage_components(f: &Immersion, group: &DeckGroup, eps_link: Option<f64>) -> Result<CountReport> {
    if group.dim() != f.target_dim() {
        return Err(Error::Domain("deck group acts on a different dimension".into()));
    }
    let report = self_intersections(f, &IntersectionParams::default())?;
    if !report.embedded {
        return Err(Error::Domain("preimage counting needs an embedded hypersurface".into()));
    }
    let data = sample_data(f)?;
    let eps = eps_link.unwrap_or(3.0 * data.median_spacing);
    let cloud = build_cloud(&data, &group.elements);
    let (labels, k) = components(&cloud.points, eps);
    for factor in [0.8, 1.2] {
        let (_, k2) = components(&cloud.points, eps * factor);
        if k2 != k {
            return Err(Error::Resolution(format!(
                "component count changes from {k} to {k2} when the link distance is scaled by {factor}"
            )));
        }
    }
    let c0: Vec<Vec<f64>> = cloud
        .points
        .iter()
        .zip(&labels)
        .filter(|(_, &l)| l == labels[0])
        .map(|(p, _)| p.clone())
        .collect();
    let hash = SpatialHash::new(&c0, eps);
    let gc_order = group
        .elements
        .iter()
        .filter(|g| {
            c0.iter().all(|p| {
                let q = g.apply_vec(&DVector::from_column_slice(p));
                hash.nearest(q.as_slice(), eps).is_some_and(|(_, d)| d < eps)
            })
        })
        .count();
    Ok(CountReport {
        k,
        gc_order,
        gamma_order: group.order(),
        identity_holds: k * gc_order == group.order(),
        eps_link: eps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityReport {
    pub hypotheses_hold: bool,
    pub skipped_reason: Option<String>,
    /// Preimage count of the induced map on the quotient.
    pub m: usize,
    /// Preimage count of `pr ∘ f` before dividing out the symmetries.
    pub raw_m: usize,
    pub symmetry_order: usize,
    pub gamma_order: usize,
    pub bound_holds: bool,
}

/// Number of group elements mapping the sampled image onto itself.
pub fn symmetry_order(f: &Immersion, group: &DeckGroup) -> Result<usize> {
    let data = sample_data(f)?;
    let eps = 3.0 * data.median_spacing;
    let hash = SpatialHash::new(&data.points, eps);
    Ok(group
        .elements
        .iter()
        .filter(|g| {
            data.points.iter().all(|p| {
                let q = g.apply_vec(&DVector::from_column_slice(p));
                hash.nearest(q.as_slice(), eps).is_some_and(|(_, d)| d < eps)
            })
        })
        .count())
}

/// Checks `m · |symmetries| ≤ |Γ|` for the map induced on the quotient.
pub fn multiplicity_bound_check(f: &Immersion, group: &DeckGroup) -> Result<MultiplicityReport> {
    let hyp = classify(f)?;
    if !hyp.width_lt_half_pi || hyp.contains_zero {
        let reason = format!(
            "hypotheses fail: J width {:.6} (needs < pi/2), contains 0: {}",
            hyp.interval.width(),
            hyp.contains_zero
        );
        return Ok(MultiplicityReport {
            hypotheses_hold: false,
            skipped_reason: Some(reason),
            m: 0,
            raw_m: 0,
            symmetry_order: 0,
            gamma_order: group.order(),
            bound_holds: true,
        });
    }
    if group.dim() != f.target_dim() {
        return Err(Error::Domain("deck group acts on a different dimension".into()));
    }
    let params = IntersectionParams::default();
    let data = sample_data(f)?;
    let cloud = build_cloud(&data, &group.elements);
    let analysis = find_pairs(f, &data, &group.elements, &cloud, &params);
    let raw = multiplicity(f, &data, &group.elements, &cloud, &analysis.targets, &params);
    let sym = symmetry_order(f, group)?.max(1);
    let m = raw.div_ceil(sym);
    Ok(MultiplicityReport {
        hypotheses_hold: true,
        skipped_reason: None,
        m,
        raw_m: raw,
        symmetry_order: sym,
        gamma_order: group.order(),
        bound_holds: m * sym <= group.order(),
    })
}

/// Symmetry group order `|G_f|` of a wrapped family and its reduced factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorReport {
    pub order: usize,
    pub irreducible: bool,
    pub factor: Expr,
}

fn find_clifford(e: &Expr) -> Option<(u32, u32)> {
    match e {
        Expr::Clifford { a, b } => Some((*a, *b)),
        Expr::Translate { inner, .. }
        | Expr::Rotate { inner, .. }
        | Expr::Precompose { inner, .. }
        | Expr::Moebius { inner, .. }
        | Expr::Zeta { inner, .. }
        | Expr::CentralProjection { inner }
        | Expr::CentralLift { inner }
        | Expr::StraightLine { inner, .. } => find_clifford(inner),
        _ => None,
    }
}

fn replace_clifford(e: &Expr, a: u32, b: u32) -> Expr {
    let mut out = e.clone();
    fn walk(e: &mut Expr, a: u32, b: u32) {
        match e {
            Expr::Clifford { a: x, b: y } => {
                *x = a;
                *y = b;
            }
            Expr::Translate { inner, .. }
            | Expr::Rotate { inner, .. }
            | Expr::Precompose { inner, .. }
            | Expr::Moebius { inner, .. }
            | Expr::Zeta { inner, .. }
            | Expr::CentralProjection { inner }
            | Expr::CentralLift { inner }
            | Expr::StraightLine { inner, .. } => walk(inner, a, b),
            _ => {}
        }
    }
    walk(&mut out, a, b);
    out
}

/// Detects the deck symmetries `f ∘ γ = f` among the candidate lattice of the
/// family: angle shifts `(2πi/a, 2πj/b)` for wrapped tori, `±id` for spheres.
pub fn irreducible_factor(f: &Immersion) -> Result<FactorReport> {
    let probe = f.clone().with_resolution(f.resolution.min(16));
    let samples = probe.samples();
    let base = probe.points()?;
    let same = |shifted: &dyn Fn(&ChartPoint) -> ChartPoint| -> Result<bool> {
        for (cp, p) in samples.iter().zip(&base) {
            let q = probe.point(&shifted(cp))?;
            if dist(p, &q) > 1e-9 {
                return Ok(false);
            }
        }
        Ok(true)
    };
    match (f.domain, find_clifford(&f.expr)) {
        (Domain::Torus, Some((a, b))) => {
            let tau = std::f64::consts::TAU;
            let mut order = 0;
            let mut along_a = 0u32;
            let mut along_b = 0u32;
            for i in 0..a {
                for j in 0..b {
                    let (dt, dp) = (tau * f64::from(i) / f64::from(a), tau * f64::from(j) / f64::from(b));
                    let shift = move |cp: &ChartPoint| ChartPoint::new(0, &[cp.x[0] + dt, cp.x[1] + dp]);
                    if same(&shift)? {
                        order += 1;
                        if j == 0 {
                            along_a += 1;
                        }
                        if i == 0 {
                            along_b += 1;
                        }
                    }
                }
            }
            let factor = replace_clifford(&f.expr, a / along_a.max(1), b / along_b.max(1));
            Ok(FactorReport {
                order,
                irreducible: order == 1,
                factor,
            })
        }
        (Domain::Sphere { .. }, _) => {
            let domain = f.domain;
            let antipode = move |cp: &ChartPoint| {
                let p: Vec<f64> = domain.point(cp).iter().map(|x| -x).collect();
                domain.locate(&p)
            };
            let order = 1 + usize::from(same(&antipode)?);
            Ok(FactorReport {
                order,
                irreducible: order == 1,
                factor: f.expr.clone(),
            })
        }
        (Domain::Torus, None) => Err(Error::Domain(
            "symmetry detection supports the wrapped torus family only".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn round_is_embedded() {
        let f = Immersion::round_simple(2, FRAC_PI_4).unwrap().with_resolution(16);
        let r = self_intersections(&f, &IntersectionParams::default()).unwrap();
        assert!(r.embedded);
        assert_eq!(r.m, 1);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn doubly_wrapped_torus_has_multiplicity_two() {
        let f = Immersion::clifford(2, 1).unwrap().with_resolution(16);
        let r = self_intersections(&f, &IntersectionParams::default()).unwrap();
        assert!(!r.embedded);
        assert_eq!(r.m, 2);
        let g = Immersion::clifford(1, 1).unwrap().with_resolution(16);
        assert!(self_intersections(&g, &IntersectionParams::default()).unwrap().embedded);
    }

    #[test]
    fn deck_groups() {
        let a = DeckGroup::antipodal(4).unwrap();
        assert_eq!(a.order(), 2);
        let l = DeckGroup::lens(3, 1).unwrap();
        assert_eq!(l.order(), 3);
        assert!(matches!(DeckGroup::lens(4, 2), Err(Error::NonFreeAction { .. })));
        assert!(DeckGroup::antipodal(5).is_err());
    }

    #[test]
    fn factor_of_wrapped_torus() {
        let f = Immersion::clifford(2, 1).unwrap();
        let rep = irreducible_factor(&f).unwrap();
        assert_eq!(rep.order, 2);
        assert_eq!(rep.factor, Expr::Clifford { a: 1, b: 1 });
        assert!(irreducible_factor(&Immersion::clifford(1, 1).unwrap()).unwrap().irreducible);
        let r = Immersion::round_simple(2, 0.7).unwrap();
        assert_eq!(irreducible_factor(&r).unwrap().order, 1);
    }
}
