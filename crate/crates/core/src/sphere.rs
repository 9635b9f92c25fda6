//! Points, caps and quadrature on the unit sphere.
//!
//! The quadrature grid is a geodesic icosphere: every face of the subdivided
//! icosahedron contributes one node (its normalized centroid) whose weight is
//! the exact area of the face's radial projection. The weights therefore tile
//! the sphere and sum to `4π` up to rounding.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Largest subdivision level accepted by [`QuadratureGrid::icosphere`].
pub const MAX_GRID_LEVEL: u32 = 8;

/// A point of the unit sphere.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct UnitVector(Vec3);

impl UnitVector {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::from_vec(Vec3::new(x, y, z))
    }

    /// Normalizes `v`. Fails on zero or non-finite input.
    pub fn from_vec(v: Vec3) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidInput(format!(
                "cannot normalize vector ({}, {}, {})",
                v.x, v.y, v.z
            )));
        }
        Ok(UnitVector(v / norm))
    }

    pub(crate) fn new_unchecked(v: Vec3) -> Self {
        debug_assert!((v.norm() - 1.0).abs() < 1e-12);
        UnitVector(v)
    }

    pub fn x_axis() -> Self {
        UnitVector(Vec3::x())
    }

    pub fn y_axis() -> Self {
        UnitVector(Vec3::y())
    }

    pub fn z_axis() -> Self {
        UnitVector(Vec3::z())
    }

    #[inline]
    pub fn as_vec(&self) -> &Vec3 {
        &self.0
    }

    #[inline]
    pub fn dot(&self, other: &UnitVector) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn negated(&self) -> Self {
        UnitVector(-self.0)
    }

    /// An orthonormal pair `(e1, e2)` spanning the tangent plane, with
    /// `e1 x e2 = self`.
    pub fn tangent_frame(&self) -> (Vec3, Vec3) {
        let p = self.0;
        let helper = if p.x.abs() < 0.6 {
            Vec3::x()
        } else if p.y.abs() < 0.6 {
            Vec3::y()
        } else {
            Vec3::z()
        };
        let e1 = (helper - p * p.dot(&helper)).normalize();
        let e2 = p.cross(&e1);
        (e1, e2)
    }

    /// The point reached by walking the great circle from `self` in the unit
    /// tangent direction `dir` for arc length `angle`.
    pub fn geodesic_offset(&self, dir: &Vec3, angle: f64) -> UnitVector {
        let v = self.0 * angle.cos() + dir * angle.sin();
        UnitVector(v / v.norm())
    }
}

impl fmt::Debug for UnitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UnitVector({}, {}, {})", self.0.x, self.0.y, self.0.z)
    }
}

impl TryFrom<[f64; 3]> for UnitVector {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        UnitVector::new(v[0], v[1], v[2])
    }
}

impl From<UnitVector> for [f64; 3] {
    fn from(u: UnitVector) -> Self {
        [u.0.x, u.0.y, u.0.z]
    }
}

/// Spherical angle in `[0, π]`.
pub fn spherical_angle(p: &UnitVector, q: &UnitVector) -> f64 {
    p.dot(q).clamp(-1.0, 1.0).acos()
}

/// `B(q, r) = { p : sin∠(p, q) < r, cos∠(p, q) > 0 }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCap {
    center: UnitVector,
    sin_radius: f64,
}

impl SphericalCap {
    pub fn new(center: UnitVector, sin_radius: f64) -> Result<Self> {
        if !(sin_radius > 0.0 && sin_radius < 1.0) {
            return Err(Error::InvalidInput(format!(
                "cap sine radius {sin_radius} outside (0, 1)"
            )));
        }
        Ok(SphericalCap { center, sin_radius })
    }

    pub fn center(&self) -> &UnitVector {
        &self.center
    }

    pub fn sin_radius(&self) -> f64 {
        self.sin_radius
    }

    /// Angular radius `arcsin(r)`.
    pub fn angular_radius(&self) -> f64 {
        self.sin_radius.asin()
    }

    /// Area `2π(1 - cos θ)` of the cap.
    pub fn area(&self) -> f64 {
        2.0 * PI * (1.0 - (1.0 - self.sin_radius * self.sin_radius).sqrt())
    }

    pub fn contains(&self, p: &UnitVector) -> bool {
        let (sin, cos) = sin_cos_between(p, &self.center);
        sin < self.sin_radius && cos > 0.0
    }

    /// Membership in the closure `{ sin ≤ r, cos ≥ 0 }`.
    pub fn closure_contains(&self, p: &UnitVector) -> bool {
        let (sin, cos) = sin_cos_between(p, &self.center);
        sin <= self.sin_radius && cos >= 0.0
    }
}

/// `A(q, r) = B(q, 2r) − closure(B(q, r))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalAnnulus {
    inner: SphericalCap,
    outer: SphericalCap,
}

impl SphericalAnnulus {
    pub fn new(center: UnitVector, r: f64) -> Result<Self> {
        Ok(SphericalAnnulus {
            inner: SphericalCap::new(center, r)?,
            outer: SphericalCap::new(center, 2.0 * r)?,
        })
    }

    pub fn inner(&self) -> &SphericalCap {
        &self.inner
    }

    pub fn outer(&self) -> &SphericalCap {
        &self.outer
    }

    pub fn contains(&self, p: &UnitVector) -> bool {
        self.outer.contains(p) && !self.inner.closure_contains(p)
    }
}

/// `(sin∠, cos∠)`, with the sine taken from the cross product so that it
/// stays accurate near the center.
#[inline]
pub fn sin_cos_between(p: &UnitVector, q: &UnitVector) -> (f64, f64) {
    (p.0.cross(&q.0).norm(), p.0.dot(&q.0))
}

/// Spherical quadrature nodes with positive weights partitioning `4π`.
///
/// The nodes double as the normal set of the discrete Minkowski problem.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    nodes: Vec<UnitVector>,
    weights: Vec<f64>,
    level: Option<u32>,
}

impl QuadratureGrid {
    /// Geodesic icosphere with `20·4^level` nodes.
    pub fn icosphere(level: u32) -> Result<Self> {
        if level > MAX_GRID_LEVEL {
            return Err(Error::Resource(format!(
                "grid level {level} exceeds the limit {MAX_GRID_LEVEL}"
            )));
        }
        let (verts, faces) = icosahedron();
        let count = 20usize * 4usize.pow(level);
        let mut nodes = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for f in faces.iter() {
            subdivide(
                [verts[f[0]], verts[f[1]], verts[f[2]]],
                level,
                &mut nodes,
                &mut weights,
            );
        }
        Ok(QuadratureGrid {
            nodes,
            weights,
            level: Some(level),
        })
    }

    /// The `10·4^level + 2` vertices of the subdivided icosahedron with equal
    /// weights. Level 1 gives the 42-direction set used for small problems.
    pub fn icosphere_vertices(level: u32) -> Result<Self> {
        if level > MAX_GRID_LEVEL {
            return Err(Error::Resource(format!(
                "grid level {level} exceeds the limit {MAX_GRID_LEVEL}"
            )));
        }
        let (verts, faces) = icosahedron();
        let mut points: Vec<Vec3> = verts.to_vec();
        let mut tris: Vec<[usize; 3]> = faces.to_vec();
        for _ in 0..level {
            let mut midpoint = std::collections::HashMap::new();
            let mut next = Vec::with_capacity(tris.len() * 4);
            for t in &tris {
                let mut mid = [0usize; 3];
                for k in 0..3 {
                    let (a, b) = (t[k], t[(k + 1) % 3]);
                    let key = (a.min(b), a.max(b));
                    mid[k] = *midpoint.entry(key).or_insert_with(|| {
                        points.push((points[a] + points[b]).normalize());
                        points.len() - 1
                    });
                }
                next.push([t[0], mid[0], mid[2]]);
                next.push([t[1], mid[1], mid[0]]);
                next.push([t[2], mid[2], mid[1]]);
                next.push([mid[0], mid[1], mid[2]]);
            }
            tris = next;
        }
        let w = 4.0 * PI / points.len() as f64;
        let weights = vec![w; points.len()];
        let nodes = points.into_iter().map(UnitVector::new_unchecked).collect();
        Ok(QuadratureGrid {
            nodes,
            weights,
            level: None,
        })
    }

    /// A custom normal set. Weights must be positive, sum to `4π`, and
    /// balance (`Σ w_i u_i = 0`).
    pub fn from_parts(nodes: Vec<UnitVector>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} nodes but {} weights",
                nodes.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput(format!("non-positive weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 4.0 * PI).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "weights sum to {total}, expected 4π"
            )));
        }
        let grid = QuadratureGrid {
            nodes,
            weights,
            level: None,
        };
        let moment = grid.first_moment().norm();
        if moment > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "weighted nodes are unbalanced: |Σ w u| = {moment:e}"
            )));
        }
        Ok(grid)
    }

    /// Equal-weight grid on an arbitrary balanced normal set.
    pub fn from_normals(nodes: Vec<UnitVector>) -> Result<Self> {
        let w = 4.0 * PI / nodes.len().max(1) as f64;
        let weights = vec![w; nodes.len()];
        Self::from_parts(nodes, weights)
    }

    /// Equal weights, no balance check.
    #[cfg(test)]
    pub(crate) fn unchecked(nodes: Vec<UnitVector>) -> Self {
        let w = 4.0 * PI / nodes.len() as f64;
        QuadratureGrid {
            weights: vec![w; nodes.len()],
            nodes,
            level: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[UnitVector] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node(&self, i: usize) -> &UnitVector {
        &self.nodes[i]
    }

    /// Subdivision depth for icosphere grids.
    pub fn level(&self) -> Option<u32> {
        self.level
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ w_i u_i`.
    pub fn first_moment(&self) -> Vec3 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(Vec3::zeros(), |acc, (u, w)| acc + u.0 * *w)
    }

    /// Mean angular node spacing, `sqrt(4π / N)`.
    pub fn mean_spacing(&self) -> f64 {
        (self.total_weight() / self.len() as f64).sqrt()
    }

    /// Index of the node closest to `p`.
    pub fn nearest(&self, p: &UnitVector) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, u) in self.nodes.iter().enumerate() {
            let d = u.dot(p);
            if d > best_dot {
                best_dot = d;
                best = i;
            }
        }
        best
    }

    /// `Σ w_i g(u_i) u_i`.
    ///
    /// `g` is evaluated in parallel; the sum is accumulated in node order so
    /// the result does not depend on scheduling.
    pub fn integrate_vector<G>(&self, g: G) -> Result<Vec3>
    where
        G: Fn(&UnitVector) -> f64 + Sync,
    {
        let values: Vec<f64> = self.nodes.par_iter().map(&g).collect();
        let mut acc = Vec3::zeros();
        for (i, ((u, w), v)) in self.nodes.iter().zip(&self.weights).zip(&values).enumerate() {
            if !v.is_finite() {
                return Err(Error::Evaluation { node: i, value: *v });
            }
            acc += u.0 * (w * v);
        }
        Ok(acc)
    }

    /// `Σ w_i g(u_i)`.
    pub fn integrate_scalar<G>(&self, g: G) -> Result<f64>
    where
        G: Fn(&UnitVector) -> f64 + Sync,
    {
        let values: Vec<f64> = self.nodes.par_iter().map(&g).collect();
        let mut acc = 0.0;
        for (i, (w, v)) in self.weights.iter().zip(&values).enumerate() {
            if !v.is_finite() {
                return Err(Error::Evaluation { node: i, value: *v });
            }
            acc += w * v;
        }
        Ok(acc)
    }
}

/// Area of the spherical triangle with unit vertices `a, b, c`
/// (Van Oosterom–Strackee form of l'Huilier's theorem).
pub fn spherical_triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let triple = a.dot(&b.cross(c)).abs();
    let denom = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * triple.atan2(denom)
}

fn subdivide(tri: [Vec3; 3], level: u32, nodes: &mut Vec<UnitVector>, weights: &mut Vec<f64>) {
    let [a, b, c] = tri;
    if level == 0 {
        let centroid = (a + b + c).normalize();
        nodes.push(UnitVector(centroid));
        weights.push(spherical_triangle_area(&a, &b, &c));
        return;
    }
    let ab = (a + b).normalize();
    let bc = (b + c).normalize();
    let ca = (c + a).normalize();
    subdivide([a, ab, ca], level - 1, nodes, weights);
    subdivide([b, bc, ab], level - 1, nodes, weights);
    subdivide([c, ca, bc], level - 1, nodes, weights);
    subdivide([ab, bc, ca], level - 1, nodes, weights);
}

fn icosahedron() -> ([Vec3; 12], [[usize; 3]; 20]) {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let verts = raw.map(|v| Vec3::new(v[0], v[1], v[2]).normalize());
    let faces = [
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (verts, faces)
}

/// The 62 directions of the icosahedron's vertices, edge midpoints and face
/// centers, used to probe hemisphere conditions.
pub fn probe_directions() -> Vec<UnitVector> {
    let (verts, faces) = icosahedron();
    let mut out: Vec<UnitVector> = verts.iter().map(|v| UnitVector(*v)).collect();
    let mut edges = std::collections::BTreeSet::new();
    for f in faces.iter() {
        out.push(UnitVector((verts[f[0]] + verts[f[1]] + verts[f[2]]).normalize()));
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            edges.insert((a.min(b), a.max(b)));
        }
    }
    for (a, b) in edges {
        out.push(UnitVector((verts[a] + verts[b]).normalize()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize) -> UnitVector {
        [UnitVector::x_axis(), UnitVector::y_axis(), UnitVector::z_axis()][i]
    }

    #[test]
    fn angles_of_axes() {
        assert_eq!(spherical_angle(&e(2), &e(2)), 0.0);
        assert!((spherical_angle(&e(2), &e(2).negated()) - PI).abs() < 1e-15);
        assert!((spherical_angle(&e(2), &e(0)) - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn unit_vector_rejects_zero() {
        assert!(UnitVector::new(0.0, 0.0, 0.0).is_err());
        assert!(UnitVector::new(f64::NAN, 0.0, 1.0).is_err());
        let u = UnitVector::new(3.0, 4.0, 12.0).unwrap();
        assert!((u.as_vec().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cap_membership_boundaries() {
        let cap = SphericalCap::new(e(2), 0.5).unwrap();
        assert!(cap.contains(&e(2)));
        assert!(SphericalCap::new(e(2), 0.999).unwrap().contains(&e(2)));
        // cos = 0 fails the strict inequality whatever the radius
        assert!(!SphericalCap::new(e(2), 0.999).unwrap().contains(&e(0)));
        // sin∠ = 0.5 exactly: strict inequality fails
        let p = UnitVector::new(0.5, 0.0, 3f64.sqrt() / 2.0).unwrap();
        let (s, _) = sin_cos_between(&p, &e(2));
        assert!((s - 0.5).abs() < 1e-15);
        let q = UnitVector::new(0.5 - 1e-9, 0.0, (1.0 - (0.5 - 1e-9f64).powi(2)).sqrt()).unwrap();
        assert!(cap.contains(&q));
        let outside = UnitVector::new(0.5 + 1e-9, 0.0, 0.8).unwrap();
        assert!(!cap.contains(&outside));
        assert!(!cap.contains(&e(2).negated()));
    }

    #[test]
    fn cap_rejects_bad_radius() {
        assert!(SphericalCap::new(e(0), 0.0).is_err());
        assert!(SphericalCap::new(e(0), 1.0).is_err());
    }

    #[test]
    fn annulus_excludes_inner_closure() {
        let ann = SphericalAnnulus::new(e(2), 0.2).unwrap();
        assert!(!ann.contains(&e(2)));
        let mid = e(2).geodesic_offset(&Vec3::x(), 0.3f64);
        assert!(ann.contains(&mid));
        let far = e(2).geodesic_offset(&Vec3::x(), 0.5f64);
        assert!(!ann.contains(&far));
    }

    #[test]
    fn grid_sizes_and_mass() {
        for level in 0..=4 {
            let g = QuadratureGrid::icosphere(level).unwrap();
            assert_eq!(g.len(), 20 * 4usize.pow(level));
            assert!((g.total_weight() - 4.0 * PI).abs() < 1e-10);
            assert!(g.first_moment().norm() < 1e-9);
            assert!(g.weights().iter().all(|w| *w > 0.0));
        }
        assert_eq!(QuadratureGrid::icosphere(3).unwrap().len(), 1280);
    }

    #[test]
    fn grid_level_guard() {
        assert!(matches!(
            QuadratureGrid::icosphere(MAX_GRID_LEVEL + 1),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn grid_is_deterministic() {
        let a = QuadratureGrid::icosphere(3).unwrap();
        let b = QuadratureGrid::icosphere(3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn vertex_grid_has_42_directions() {
        let g = QuadratureGrid::icosphere_vertices(1).unwrap();
        assert_eq!(g.len(), 42);
        assert!(g.first_moment().norm() < 1e-12);
    }

    #[test]
    fn probe_set_has_62_directions() {
        let probes = probe_directions();
        assert_eq!(probes.len(), 62);
        for (i, a) in probes.iter().enumerate() {
            for b in &probes[i + 1..] {
                assert!(spherical_angle(a, b) > 0.1);
            }
        }
    }

    #[test]
    fn constant_field_integrates_to_zero() {
        let g = QuadratureGrid::icosphere(4).unwrap();
        assert!(g.integrate_vector(|_| 1.0).unwrap().norm() < 1e-9);
    }

    #[test]
    fn linear_field_gives_third_of_sphere_area() {
        let g = QuadratureGrid::icosphere(5).unwrap();
        let r = g.integrate_vector(|p| p.as_vec().z).unwrap();
        let expected = Vec3::z() * (4.0 * PI / 3.0);
        assert!((r - expected).norm() < 1e-6, "{r:?}");
    }

    #[test]
    fn non_finite_values_are_reported() {
        let g = QuadratureGrid::icosphere(1).unwrap();
        let bad = g.integrate_vector(|p| if p.as_vec().z > 0.9 { f64::NAN } else { 1.0 });
        match bad {
            Err(Error::Evaluation { node, .. }) => assert!(g.node(node).as_vec().z > 0.9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn triangle_area_of_octant() {
        let a = spherical_triangle_area(&Vec3::x(), &Vec3::y(), &Vec3::z());
        assert!((a - PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn tangent_frame_is_orthonormal() {
        for p in probe_directions() {
            let (e1, e2) = p.tangent_frame();
            assert!(e1.dot(p.as_vec()).abs() < 1e-14);
            assert!(e2.dot(p.as_vec()).abs() < 1e-14);
            assert!(e1.dot(&e2).abs() < 1e-14);
            assert!((e1.cross(&e2) - p.as_vec()).norm() < 1e-14);
        }
    }
}
