//! Uniform-grid spatial hash and disjoint-set forest.

use std::collections::HashMap;

pub(crate) struct SpatialHash<'a> {
    cell: f64,
    points: &'a [Vec<f64>],
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl<'a> SpatialHash<'a> {
    pub fn new(points: &'a [Vec<f64>], cell: f64) -> SpatialHash<'a> {
        let cell = if cell > 0.0 && cell.is_finite() { cell } else { 1.0 };
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(key(p, cell)).or_default().push(i);
        }
        SpatialHash {
            cell,
            points,
            buckets,
        }
    }

    /// Indices of points within `radius` of `q` (inclusive), unordered.
    pub fn within(&self, q: &[f64], radius: f64) -> Vec<usize> {
        let reach = (radius / self.cell).ceil() as i64;
        let base = key(q, self.cell);
        let mut out = Vec::new();
        let r2 = radius * radius;
        let mut offset = vec![-reach; base.len()];
        loop {
            let k: Vec<i64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
            if let Some(ids) = self.buckets.get(&k) {
                for &i in ids {
                    let d2: f64 = self.points[i]
                        .iter()
                        .zip(q)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    if d2 <= r2 {
                        out.push(i);
                    }
                }
            }
            // odometer over the cube of neighboring cells
            let mut d = 0;
            loop {
                if d == offset.len() {
                    return out;
                }
                offset[d] += 1;
                if offset[d] <= reach {
                    break;
                }
                offset[d] = -reach;
                d += 1;
            }
        }
    }

    /// Nearest point to `q`, searching outward up to `max_radius`.
    pub fn nearest(&self, q: &[f64], max_radius: f64) -> Option<(usize, f64)> {
        let mut radius = self.cell;
        loop {
            let best = self
                .within(q, radius)
                .into_iter()
                .map(|i| {
                    let d: f64 = self.points[i]
                        .iter()
                        .zip(q)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    (i, d)
                })
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if best.is_some() || radius >= max_radius {
                return best;
            }
            radius = (radius * 2.0).min(max_radius);
        }
    }
}

fn key(p: &[f64], cell: f64) -> Vec<i64> {
    p.iter().map(|x| (x / cell).floor() as i64).collect()
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }

    /// Component label per element, numbered densely from zero.
    pub fn labels(&mut self) -> (Vec<usize>, usize) {
        let n = self.parent.len();
        let mut ids = HashMap::new();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let r = self.find(i);
            let next = ids.len();
            out.push(*ids.entry(r).or_insert(next));
        }
        let count = ids.len();
        (out, count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_brute_force() {
        let pts: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.37;
                vec![t.sin(), (1.3 * t).cos(), (0.7 * t).sin() * 0.5]
            })
            .collect();
        let h = SpatialHash::new(&pts, 0.1);
        for q in pts.iter().step_by(17) {
            let mut got = h.within(q, 0.25);
            got.sort();
            let want: Vec<usize> = (0..pts.len())
                .filter(|&i| {
                    pts[i].iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>() <= 0.0625
                })
                .collect();
            assert_eq!(got, want);
        }
        let q = [0.0, 1.0, 0.0];
        let (_, d) = h.nearest(&q, 4.0).unwrap();
        let brute = pts
            .iter()
            .map(|p| p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!((d - brute).abs() < 1e-15);
    }

    #[test]
    fn union_find_components() {
        let mut uf = UnionFind::new(6);
        uf.union(0, 1);
        uf.union(2, 3);
        uf.union(1, 3);
        let (labels, count) = uf.labels();
        assert_eq!(count, 3);
        assert_eq!(labels[0], labels[2]);
        assert_ne!(labels[4], labels[5]);
    }
}
