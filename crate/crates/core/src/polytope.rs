//! Convex polytopes given by support numbers over a fixed normal set.
//!
//! `realize` intersects the half-spaces `<x, u_i> <= h_i` by polarity: after
//! moving a strict interior point to the origin, the vertices of the
//! intersection are the poles of the facets of `conv{u_i / h_i}`, and the
//! facet with normal `u_i` is non-empty exactly when `u_i / h_i` is a vertex
//! of that hull.

use std::sync::Arc;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hull::convex_hull;
use crate::sphere::{QuadratureGrid, UnitVector, Vec3};

/// Support numbers `h_i` over the nodes of a grid.
#[derive(Debug, Clone)]
pub struct SupportVector {
    grid: Arc<QuadratureGrid>,
    values: Vec<f64>,
}

impl SupportVector {
    pub fn new(grid: Arc<QuadratureGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} support numbers for {} normals",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                node: i,
                value: values[i],
            });
        }
        Ok(SupportVector { grid, values })
    }

    pub fn constant(grid: Arc<QuadratureGrid>, value: f64) -> Self {
        let values = vec![value; grid.len()];
        SupportVector { grid, values }
    }

    /// Support numbers of a body given by its support function.
    pub fn from_fn(grid: Arc<QuadratureGrid>, f: impl Fn(&UnitVector) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(f).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `h_i + <c, u_i>`: the same body translated by `c`.
    pub fn translated(&self, c: &Vec3) -> Self {
        let values = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(u, h)| h + u.as_vec().dot(c))
            .collect();
        SupportVector {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        SupportVector {
            grid: self.grid.clone(),
            values: self.values.iter().map(|h| h * s).collect(),
        }
    }
}

/// Support numbers of the outer parallel body at distance `t`.
///
/// Negative `t` shrinks the body; an empty result is reported when the
/// vector is realized.
pub fn parallel_support(h: &SupportVector, t: f64) -> SupportVector {
    SupportVector {
        grid: h.grid.clone(),
        values: h.values.iter().map(|v| v + t).collect(),
    }
}

/// One facet per grid normal; empty facets have no vertices and zero area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub normal_index: usize,
    pub normal: UnitVector,
    pub vertex_loop: Vec<usize>,
    pub area: f64,
    pub plane_offset: f64,
}

impl Facet {
    pub fn is_empty(&self) -> bool {
        self.vertex_loop.is_empty()
    }
}

/// An edge shared by two non-empty facets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacetEdge {
    pub facets: (usize, usize),
    pub vertices: (usize, usize),
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct ConvexPolytope {
    vertices: Vec<Vec3>,
    facets: Vec<Facet>,
    edges: Vec<FacetEdge>,
}

/// Anything with a support function `h(x) = max_{y in K} <x, y>`.
pub trait SupportFunction {
    fn support(&self, x: &Vec3) -> f64;
}

/// Euclidean ball, mainly a reference body for tests and controls.
#[derive(Debug, Clone, Copy)]
pub struct Ball {
    pub center: Vec3,
    pub radius: f64,
}

impl SupportFunction for Ball {
    fn support(&self, x: &Vec3) -> f64 {
        x.dot(&self.center) + self.radius * x.norm()
    }
}

impl SupportFunction for ConvexPolytope {
    fn support(&self, x: &Vec3) -> f64 {
        self.vertices
            .iter()
            .map(|v| v.dot(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl<F: Fn(&Vec3) -> f64> SupportFunction for F {
    fn support(&self, x: &Vec3) -> f64 {
        self(x)
    }
}

/// Intersects the half-spaces `<x, u_i> <= h_i`.
pub fn realize(h: &SupportVector) -> Result<ConvexPolytope> {
    let normals = h.grid.nodes();
    let center = interior_point(normals, &h.values)?;

    let shifted: Vec<f64> = normals
        .iter()
        .zip(&h.values)
        .map(|(u, v)| v - u.as_vec().dot(&center))
        .collect();
    let dual: Vec<[f64; 3]> = normals
        .iter()
        .zip(&shifted)
        .map(|(u, s)| {
            let d = u.as_vec() / *s;
            [d.x, d.y, d.z]
        })
        .collect();

    let hull = convex_hull(&dual)?;
    let origin = robust::Coord3D {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };
    let c3 = |p: &[f64; 3]| robust::Coord3D {
        x: p[0],
        y: p[1],
        z: p[2],
    };
    for f in &hull.faces {
        let o = robust::orient3d(c3(&dual[f[0]]), c3(&dual[f[1]]), c3(&dual[f[2]]), origin);
        if o <= 0.0 {
            return Err(Error::NotPositivelySpanning);
        }
    }

    // pole of each hull face, in the shifted frame
    let poles: Vec<Vec3> = hull
        .faces
        .iter()
        .map(|f| {
            let a = Vec3::from(dual[f[0]]);
            let b = Vec3::from(dual[f[1]]);
            let c = Vec3::from(dual[f[2]]);
            let n = (b - a).cross(&(c - a));
            n / n.dot(&a)
        })
        .collect();
    let radius = poles.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let merge_tol = 1e-12 * radius.max(f64::MIN_POSITIVE);

    // merge poles of adjacent coplanar hull faces
    let mut parent: Vec<usize> = (0..poles.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (f, nbrs) in hull.neighbors.iter().enumerate() {
        for &g in nbrs {
            if g > f && (poles[f] - poles[g]).norm() <= merge_tol {
                let (rf, rg) = (find(&mut parent, f), find(&mut parent, g));
                if rf != rg {
                    parent[rf.max(rg)] = rf.min(rg);
                }
            }
        }
    }
    let rep: Vec<usize> = (0..poles.len()).map(|f| find(&mut parent, f)).collect();

    let mut incident = vec![usize::MAX; dual.len()];
    for (f, face) in hull.faces.iter().enumerate() {
        for &v in face {
            if incident[v] == usize::MAX {
                incident[v] = f;
            }
        }
    }

    let mut vertex_index = vec![usize::MAX; poles.len()];
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut facets = Vec::with_capacity(normals.len());
    let mut edges = Vec::new();

    for (i, u) in normals.iter().enumerate() {
        let mut facet = Facet {
            normal_index: i,
            normal: *u,
            vertex_loop: Vec::new(),
            area: 0.0,
            plane_offset: h.values[i],
        };
        let start = incident[i];
        if start == usize::MAX {
            facets.push(facet);
            continue;
        }
        // walk the hull faces around dual vertex i
        let mut ring: Vec<(usize, usize)> = Vec::new(); // (merged face, neighbor across next edge)
        let mut f = start;
        loop {
            let k = hull.faces[f].iter().position(|&v| v == i).unwrap();
            let next = hull.faces[f][(k + 1) % 3];
            ring.push((rep[f], next));
            f = hull.neighbors[f][k];
            if f == start {
                break;
            }
        }
        let mut loop_reps: Vec<usize> = Vec::with_capacity(ring.len());
        for (idx, &(r, nb)) in ring.iter().enumerate() {
            let (r_next, _) = ring[(idx + 1) % ring.len()];
            if loop_reps.last() != Some(&r) {
                loop_reps.push(r);
            }
            if r != r_next && i < nb {
                edges.push((i, nb, r, r_next));
            }
        }
        while loop_reps.len() > 1 && loop_reps.first() == loop_reps.last() {
            loop_reps.pop();
        }
        if loop_reps.len() < 3 {
            facets.push(facet);
            continue;
        }
        let pts: Vec<Vec3> = loop_reps.iter().map(|&r| poles[r]).collect();
        let mut newell = Vec3::zeros();
        for k in 1..pts.len() - 1 {
            newell += (pts[k] - pts[0]).cross(&(pts[k + 1] - pts[0]));
        }
        let mut area = 0.5 * newell.dot(u.as_vec());
        if area < 0.0 {
            loop_reps.reverse();
            area = -area;
        }
        facet.vertex_loop = loop_reps
            .iter()
            .map(|&r| {
                if vertex_index[r] == usize::MAX {
                    vertex_index[r] = vertices.len();
                    vertices.push(poles[r] + center);
                }
                vertex_index[r]
            })
            .collect();
        facet.area = area;
        facets.push(facet);
    }

    let edges = edges
        .into_iter()
        .filter_map(|(i, j, ra, rb)| {
            // an edge may join facets whose other side collapsed
            if facets[i].is_empty() || facets[j].is_empty() {
                return None;
            }
            let (a, b) = (vertex_index[ra], vertex_index[rb]);
            if a == usize::MAX || b == usize::MAX {
                return None;
            }
            Some(FacetEdge {
                facets: (i, j),
                vertices: (a, b),
                length: (vertices[a] - vertices[b]).norm(),
            })
        })
        .collect();

    Ok(ConvexPolytope {
        vertices,
        facets,
        edges,
    })
}

/// A point `c` with `<c, u_i> < h_i` for all `i`, preferring the origin.
fn interior_point(normals: &[UnitVector], h: &[f64]) -> Result<Vec3> {
    let scale = h.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let slack = |c: &Vec3| {
        normals
            .iter()
            .zip(h)
            .map(|(u, v)| v - u.as_vec().dot(c))
            .fold(f64::INFINITY, f64::min)
    };
    let good = 1e-3 * scale;
    let origin = Vec3::zeros();
    if slack(&origin) > good {
        return Ok(origin);
    }
    // pull toward the violated constraints' normals
    let pull = normals
        .iter()
        .zip(h)
        .fold(Vec3::zeros(), |acc, (u, v)| acc + u.as_vec() * v.min(0.0));
    let guess = pull * (3.0 / normals.len() as f64);
    if slack(&guess) > good {
        return Ok(guess);
    }
    let (radius, center) = chebyshev_center(normals.iter().map(|u| u.as_vec()).zip(h.iter().copied()), scale)?;
    if radius <= 1e-12 * scale {
        return Err(Error::EmptyBody);
    }
    Ok(center)
}

/// Largest ball inside `{ <x, u> <= h }`: returns `(radius, center)`.
fn chebyshev_center<'a>(
    planes: impl Iterator<Item = (&'a Vec3, f64)>,
    scale: f64,
) -> Result<(f64, Vec3)> {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let free = (f64::NEG_INFINITY, f64::INFINITY);
    let cx = lp.add_var(0.0, free);
    let cy = lp.add_var(0.0, free);
    let cz = lp.add_var(0.0, free);
    let t = lp.add_var(1.0, (f64::NEG_INFINITY, 4.0 * scale + 1.0));
    for (u, h) in planes {
        lp.add_constraint(&[(cx, u.x), (cy, u.y), (cz, u.z), (t, 1.0)], ComparisonOp::Le, h);
    }
    match lp.solve() {
        Ok(sol) => Ok((sol[t], Vec3::new(sol[cx], sol[cy], sol[cz]))),
        Err(minilp::Error::Unbounded) => Err(Error::NotPositivelySpanning),
        Err(minilp::Error::Infeasible) => Err(Error::EmptyBody),
    }
}

impl ConvexPolytope {
    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn edges(&self) -> &[FacetEdge] {
        &self.edges
    }

    /// Builds a polytope from explicit parts (used when re-importing bodies).
    pub fn from_parts(vertices: Vec<Vec3>, facets: Vec<Facet>) -> Self {
        ConvexPolytope {
            vertices,
            facets,
            edges: Vec::new(),
        }
    }

    pub fn facet_areas(&self) -> Vec<f64> {
        self.facets.iter().map(|f| f.area).collect()
    }

    pub fn total_area(&self) -> f64 {
        self.facets.iter().map(|f| f.area).sum()
    }

    /// `Σ A_i u_i`, zero for a closed surface.
    pub fn normal_balance(&self) -> Vec3 {
        self.facets
            .iter()
            .fold(Vec3::zeros(), |acc, f| acc + f.normal.as_vec() * f.area)
    }

    /// `(1/3) Σ h_i A_i`.
    pub fn volume(&self) -> f64 {
        let v = self
            .facets
            .iter()
            .map(|f| f.plane_offset * f.area)
            .sum::<f64>()
            / 3.0;
        debug_assert!(
            self.vertices.is_empty()
                || (v - self.volume_by_tetrahedra()).abs() <= 1e-9 * v.abs().max(1e-300),
            "volume mismatch: {v} vs {}",
            self.volume_by_tetrahedra()
        );
        v
    }

    fn tetrahedra(&self) -> impl Iterator<Item = (f64, Vec3)> + '_ {
        let apex = self.vertices.iter().sum::<Vec3>() / self.vertices.len().max(1) as f64;
        self.facets.iter().flat_map(move |f| {
            let lp = &f.vertex_loop;
            (1..lp.len().saturating_sub(1)).map(move |k| {
                let a = self.vertices[lp[0]] - apex;
                let b = self.vertices[lp[k]] - apex;
                let c = self.vertices[lp[k + 1]] - apex;
                let vol = a.dot(&b.cross(&c)) / 6.0;
                (vol, apex + (a + b + c) / 4.0)
            })
        })
    }

    /// Volume as a sum of signed tetrahedra over fan-triangulated facets.
    pub fn volume_by_tetrahedra(&self) -> f64 {
        self.tetrahedra().map(|(v, _)| v).sum()
    }

    /// Volume centroid.
    pub fn centroid(&self) -> Vec3 {
        let (vol, moment) = self
            .tetrahedra()
            .fold((0.0, Vec3::zeros()), |(v, m), (tv, tc)| (v + tv, m + tc * tv));
        moment / vol
    }

    pub fn translated(&self, t: &Vec3) -> Self {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v += t;
        }
        for f in &mut out.facets {
            f.plane_offset += f.normal.as_vec().dot(t);
        }
        out
    }

    /// Dilation about the origin by `s > 0`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v *= s;
        }
        for f in &mut out.facets {
            f.plane_offset *= s;
            f.area *= s * s;
        }
        for e in &mut out.edges {
            e.length *= s;
        }
        out
    }

    /// Moves the volume centroid to the origin; returns the body and the
    /// translation applied.
    pub fn recenter(&self) -> (Self, Vec3) {
        let t = -self.centroid();
        (self.translated(&t), t)
    }

    /// Support numbers of this polytope over its own normals.
    pub fn support_vector(&self, grid: Arc<QuadratureGrid>) -> Result<SupportVector> {
        SupportVector::new(grid, self.facets.iter().map(|f| f.plane_offset).collect())
    }

    pub fn support_eval(&self, u: &UnitVector) -> f64 {
        self.support(u.as_vec())
    }

    /// The vertices attaining the support value in direction `u`, within
    /// `tol`.
    pub fn support_set(&self, u: &Vec3, tol: f64) -> Vec<usize> {
        let h = self.support(u);
        (0..self.vertices.len())
            .filter(|&i| self.vertices[i].dot(u) >= h - tol)
            .collect()
    }

    /// Maximal vertex distance.
    pub fn diameter(&self) -> f64 {
        let n = self.vertices.len();
        if n < 2 {
            return 0.0;
        }
        let center = self.vertices.iter().sum::<Vec3>() / n as f64;
        let dist: Vec<f64> = self.vertices.iter().map(|v| (v - center).norm()).collect();
        let reach = dist.iter().cloned().fold(0.0, f64::max);
        // lower bound from the farthest vertex and its antipode
        let far = (0..n).max_by(|&a, &b| dist[a].total_cmp(&dist[b])).unwrap();
        let mut best = self
            .vertices
            .iter()
            .map(|v| (v - self.vertices[far]).norm())
            .fold(0.0, f64::max);
        // only vertices that can beat `best` need the full scan
        let candidates: Vec<usize> = (0..n).filter(|&i| dist[i] + reach > best).collect();
        let found = candidates
            .par_iter()
            .map(|&i| {
                let vi = self.vertices[i];
                self.vertices
                    .iter()
                    .map(|w| (vi - w).norm_squared())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
            .sqrt();
        best = best.max(found);
        best
    }

    /// Radius and center of the largest inscribed ball.
    pub fn inradius(&self) -> Result<(f64, Vec3)> {
        let scale = self.diameter().max(f64::MIN_POSITIVE);
        chebyshev_center(
            self.facets
                .iter()
                .filter(|f| !f.is_empty())
                .map(|f| (f.normal.as_vec(), f.plane_offset)),
            scale,
        )
    }
}

/// `max_u |h_P(u) - h_Q(u)|` over the sample nodes.
pub fn hausdorff_distance<P, Q>(p: &P, q: &Q, sample: &QuadratureGrid) -> f64
where
    P: SupportFunction + Sync,
    Q: SupportFunction + Sync,
{
    sample
        .nodes()
        .par_iter()
        .map(|u| (p.support(u.as_vec()) - q.support(u.as_vec())).abs())
        .reduce(|| 0.0, f64::max)
}
