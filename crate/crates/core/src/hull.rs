//! Incremental 3-D convex hull.
//!
//! Points are inserted in a pseudo-random order; each pending point keeps a
//! single conflict face it lies strictly above. Visibility is decided by
//! Shewchuk's adaptive orientation predicate, which evaluates in floating
//! point when the determinant is clearly nonzero and falls back to exact
//! expansion arithmetic otherwise. Points exactly on a face plane count as
//! not visible, so coplanar points end up interior to the hull.
//!
//! A non-manifold horizon can only arise from inconsistent predicates; if one
//! is ever detected the construction restarts with a different insertion
//! order before giving up.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust::{orient3d, Coord3D};

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;
const RESTARTS: u64 = 3;

/// Triangulated hull. Faces are counterclockwise seen from outside;
/// `neighbors[f][k]` is the face across edge `(faces[f][k], faces[f][k + 1])`.
#[derive(Debug, Clone)]
pub struct Hull {
    pub faces: Vec<[usize; 3]>,
    pub neighbors: Vec<[usize; 3]>,
}

impl Hull {
    /// Which input points are hull vertices.
    pub fn vertex_mask(&self, n_points: usize) -> Vec<bool> {
        let mut mask = vec![false; n_points];
        for f in &self.faces {
            for &v in f {
                mask[v] = true;
            }
        }
        mask
    }
}

#[inline]
fn coord(p: &[f64; 3]) -> Coord3D<f64> {
    Coord3D {
        x: p[0],
        y: p[1],
        z: p[2],
    }
}

/// Positive when `d` lies strictly above the face `(a, b, c)`.
#[inline]
fn above(points: &[[f64; 3]], face: &[usize; 3], d: &[f64; 3]) -> bool {
    orient3d(
        coord(&points[face[0]]),
        coord(&points[face[1]]),
        coord(&points[face[2]]),
        coord(d),
    ) < 0.0
}

pub fn convex_hull(points: &[[f64; 3]]) -> Result<Hull> {
    if points.len() < 4 {
        return Err(Error::Degenerate(format!(
            "{} points cannot span a solid",
            points.len()
        )));
    }
    if points.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::Degenerate("non-finite input point".into()));
    }
    let mut last = None;
    for seed in 0..RESTARTS {
        match Builder::new(points, seed).and_then(|b| b.run()) {
            Ok(h) => return Ok(h),
            Err(e @ Error::Degenerate(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap())
}

struct Builder<'a> {
    points: &'a [[f64; 3]],
    faces: Vec<[usize; 3]>,
    neighbors: Vec<[usize; 3]>,
    alive: Vec<bool>,
    conflicts: Vec<Vec<usize>>,
    point_face: Vec<usize>,
    order: Vec<usize>,
    // scratch
    visit_stamp: Vec<u64>,
    visible_flag: Vec<bool>,
    stamp: u64,
    start_of: Vec<usize>,
    end_of: Vec<usize>,
}

impl<'a> Builder<'a> {
    fn new(points: &'a [[f64; 3]], seed: u64) -> Result<Self> {
        let n = points.len();
        let simplex = initial_simplex(points)?;
        let mut b = Builder {
            points,
            faces: Vec::with_capacity(2 * n),
            neighbors: Vec::with_capacity(2 * n),
            alive: Vec::with_capacity(2 * n),
            conflicts: Vec::with_capacity(2 * n),
            point_face: vec![NONE; n],
            order: Vec::new(),
            visit_stamp: Vec::new(),
            visible_flag: Vec::new(),
            stamp: 0,
            start_of: vec![NONE; n],
            end_of: vec![NONE; n],
        };
        b.seed_tetrahedron(simplex);
        let mut order: Vec<usize> = (0..n).filter(|i| !simplex.contains(i)).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(0x6b73_7572_66 ^ seed));
        for &p in &order {
            for f in 0..4 {
                if above(points, &b.faces[f], &points[p]) {
                    b.point_face[p] = f;
                    b.conflicts[f].push(p);
                    break;
                }
            }
        }
        b.order = order;
        Ok(b)
    }

    fn push_face(&mut self, v: [usize; 3]) -> usize {
        self.faces.push(v);
        self.neighbors.push([NONE; 3]);
        self.alive.push(true);
        self.conflicts.push(Vec::new());
        self.visit_stamp.push(0);
        self.visible_flag.push(false);
        self.faces.len() - 1
    }

    fn seed_tetrahedron(&mut self, s: [usize; 4]) {
        let [a, b, c, d] = s;
        // orient so that d is below (a, b, c)
        let (b, c) = if above(self.points, &[a, b, c], &self.points[d]) {
            (c, b)
        } else {
            (b, c)
        };
        let tris = [[a, b, c], [a, d, b], [b, d, c], [c, d, a]];
        for t in tris {
            self.push_face(t);
        }
        for f in 0..4 {
            for k in 0..3 {
                let (u, v) = (self.faces[f][k], self.faces[f][(k + 1) % 3]);
                for g in 0..4 {
                    if g == f {
                        continue;
                    }
                    for m in 0..3 {
                        if self.faces[g][m] == v && self.faces[g][(m + 1) % 3] == u {
                            self.neighbors[f][k] = g;
                        }
                    }
                }
            }
        }
    }

    fn run(mut self) -> Result<Hull> {
        let order = std::mem::take(&mut self.order);
        for &p in &order {
            let f0 = self.point_face[p];
            if f0 == NONE {
                continue;
            }
            self.insert(p, f0)?;
        }
        let mut remap = vec![NONE; self.faces.len()];
        let mut faces = Vec::new();
        for (f, &alive) in self.alive.iter().enumerate() {
            if alive {
                remap[f] = faces.len();
                faces.push(self.faces[f]);
            }
        }
        let neighbors = self
            .alive
            .iter()
            .enumerate()
            .filter(|(_, a)| **a)
            .map(|(f, _)| self.neighbors[f].map(|g| remap[g]))
            .collect();
        Ok(Hull { faces, neighbors })
    }

    fn insert(&mut self, p: usize, f0: usize) -> Result<()> {
        let pt = self.points[p];
        self.stamp += 1;
        let stamp = self.stamp;
        let mut visible = vec![f0];
        self.visit_stamp[f0] = stamp;
        self.visible_flag[f0] = true;
        let mut i = 0;
        while i < visible.len() {
            let f = visible[i];
            i += 1;
            for k in 0..3 {
                let g = self.neighbors[f][k];
                if self.visit_stamp[g] == stamp {
                    continue;
                }
                self.visit_stamp[g] = stamp;
                let vis = above(self.points, &self.faces[g], &pt);
                self.visible_flag[g] = vis;
                if vis {
                    visible.push(g);
                }
            }
        }

        // horizon edges (a, b) with the surviving face across them
        let mut horizon = Vec::new();
        for &f in &visible {
            for k in 0..3 {
                let g = self.neighbors[f][k];
                if !self.visible_flag[g] {
                    let a = self.faces[f][k];
                    let b = self.faces[f][(k + 1) % 3];
                    horizon.push((a, b, g, f));
                }
            }
        }
        for &(a, b, _, _) in &horizon {
            if self.start_of[a] != NONE || self.end_of[b] != NONE {
                for &(a, b, _, _) in &horizon {
                    self.start_of[a] = NONE;
                    self.end_of[b] = NONE;
                }
                return Err(Error::Degenerate("non-manifold horizon".into()));
            }
            self.start_of[a] = 0;
            self.end_of[b] = 0;
        }

        let mut new_faces = Vec::with_capacity(horizon.len());
        for &(a, b, outer, inner) in &horizon {
            let nf = self.push_face([a, b, p]);
            self.neighbors[nf][0] = outer;
            let slot = (0..3)
                .find(|&m| {
                    self.neighbors[outer][m] == inner && self.faces[outer][m] == b
                })
                .expect("horizon face adjacency");
            self.neighbors[outer][slot] = nf;
            self.start_of[a] = nf;
            self.end_of[b] = nf;
            new_faces.push(nf);
        }
        for (idx, &(a, b, _, _)) in horizon.iter().enumerate() {
            let nf = new_faces[idx];
            self.neighbors[nf][1] = self.start_of[b];
            self.neighbors[nf][2] = self.end_of[a];
        }
        for &(a, b, _, _) in &horizon {
            self.start_of[a] = NONE;
            self.end_of[b] = NONE;
        }

        // retire the visible faces and hand their pending points to new faces
        let mut orphans = Vec::new();
        for &f in &visible {
            self.alive[f] = false;
            orphans.append(&mut self.conflicts[f]);
        }
        self.point_face[p] = NONE;
        for q in orphans {
            if q == p {
                continue;
            }
            self.point_face[q] = NONE;
            let qp = self.points[q];
            for &nf in &new_faces {
                if above(self.points, &self.faces[nf], &qp) {
                    self.point_face[q] = nf;
                    self.conflicts[nf].push(q);
                    break;
                }
            }
        }
        Ok(())
    }
}

fn initial_simplex(points: &[[f64; 3]]) -> Result<[usize; 4]> {
    let sub = |a: &[f64; 3], b: &[f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let cross = |a: &[f64; 3], b: &[f64; 3]| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let argmax = |score: &dyn Fn(&[f64; 3]) -> f64| {
        let mut best = 0;
        let mut best_s = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            let s = score(p);
            if s > best_s {
                best_s = s;
                best = i;
            }
        }
        (best, best_s)
    };
    let (i0, _) = argmax(&|p| -p[0]);
    let p0 = points[i0];
    let (i1, d1) = argmax(&|p| {
        let d = sub(p, &p0);
        dot(&d, &d)
    });
    if d1 == 0.0 {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let p1 = points[i1];
    let axis = sub(&p1, &p0);
    let (i2, d2) = argmax(&|p| {
        let c = cross(&axis, &sub(p, &p0));
        dot(&c, &c)
    });
    if d2 == 0.0 {
        return Err(Error::Degenerate("all points are collinear".into()));
    }
    let p2 = points[i2];
    let (i3, _) = argmax(&|p| {
        orient3d(coord(&p0), coord(&p1), coord(&p2), coord(p)).abs()
    });
    if orient3d(coord(&p0), coord(&p1), coord(&p2), coord(&points[i3])) == 0.0 {
        return Err(Error::Degenerate("all points are coplanar".into()));
    }
    Ok([i0, i1, i2, i3])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn check_closed(h: &Hull, points: &[[f64; 3]]) {
        for (f, face) in h.faces.iter().enumerate() {
            for k in 0..3 {
                let g = h.neighbors[f][k];
                let (a, b) = (face[k], face[(k + 1) % 3]);
                let other = h.faces[g];
                assert!((0..3).any(|m| other[m] == b && other[(m + 1) % 3] == a));
            }
            for p in points {
                assert!(!above(points, face, p), "point outside hull");
            }
        }
        // Euler characteristic of a triangulated sphere
        let nv = h.vertex_mask(points.len()).iter().filter(|x| **x).count();
        assert_eq!(h.faces.len(), 2 * nv - 4);
    }

    #[test]
    fn cube_corners() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push([
                (i & 1) as f64,
                ((i >> 1) & 1) as f64,
                ((i >> 2) & 1) as f64,
            ]);
        }
        pts.push([0.5, 0.5, 0.5]);
        pts.push([0.5, 0.5, 0.0]); // on a face
        let h = convex_hull(&pts).unwrap();
        check_closed(&h, &pts);
        let mask = h.vertex_mask(pts.len());
        assert!(mask[..8].iter().all(|x| *x));
        assert!(!mask[8]);
    }

    #[test]
    fn random_sphere_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<[f64; 3]> = (0..2000)
            .map(|_| loop {
                let v: [f64; 3] = [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ];
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if n > 0.1 && n < 1.0 {
                    break [v[0] / n, v[1] / n, v[2] / n];
                }
            })
            .collect();
        let h = convex_hull(&pts).unwrap();
        check_closed(&h, &pts);
        assert!(h.vertex_mask(pts.len()).iter().all(|x| *x));
    }

    #[test]
    fn coplanar_input_is_degenerate() {
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]];
        assert!(matches!(convex_hull(&pts), Err(Error::Degenerate(_))));
    }

    #[test]
    fn grid_of_cospherical_points() {
        // many exactly-cocircular quadruples
        let mut pts = Vec::new();
        for i in -3i32..=3 {
            for j in -3i32..=3 {
                for k in -3i32..=3 {
                    if i.abs().max(j.abs()).max(k.abs()) == 3 {
                        pts.push([i as f64, j as f64, k as f64]);
                    }
                }
            }
        }
        let h = convex_hull(&pts).unwrap();
        check_closed(&h, &pts);
        let mask = h.vertex_mask(pts.len());
        for (p, m) in pts.iter().zip(&mask) {
            if p.iter().all(|c| c.abs() == 3.0) {
                assert!(*m);
            }
        }
    }
}
