//! End-to-end construction of the bodies `K_n` and the diagnostics run on
//! them.
//!
//! For each `n` the density `f_n` is discretized, the Minkowski problem with
//! targets `F_i = f_n(u_i) w_i` is solved, and the facets are labelled by the
//! region their normal falls in. Every reported quantity is recomputed from
//! the realized polytope.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix2, Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::{hausdorff_distance, ConvexPolytope, SupportFunction, SupportVector};
use crate::profile::{build_density, minimum_n, n_is_admissible, NodeRegion, PunctureSet};
use crate::solver::{solve, MinkowskiProblem, SolveOptions, SolveReport};
use crate::sphere::{spherical_angle, QuadratureGrid, UnitVector, Vec3};

/// Tolerances of the per-body checks. Defaults are echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Relative slack on `Area(S_n) < 4π + Σ 8π/n² + Σ a_j`.
    pub area_bound_slack: f64,
    /// Relative slack on the annulus bound `8π/n²`.
    pub annulus_slack: f64,
    /// Inradius floor as a fraction of the first completed solve's inradius.
    pub inradius_floor_factor: f64,
    /// Diameter ceiling as a multiple of the first completed solve's diameter.
    pub diameter_ceiling_factor: f64,
    /// Largest angle between a fitted disc plane normal and `p_j`.
    pub plane_angle: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            area_bound_slack: 0.02,
            annulus_slack: 0.25,
            inradius_floor_factor: 0.5,
            diameter_ceiling_factor: 2.0,
            plane_angle: 0.02,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConstructionConfig {
    pub punctures: PunctureSet,
    pub n_values: Vec<u32>,
    pub grid_level: u32,
    pub solver: SolveOptions,
    pub tolerances: Tolerances,
    /// Number of random K-region probes per body.
    pub probes: usize,
    /// Probe step as a multiple of the mean grid spacing, in `[1, 5]`.
    pub probe_step_factor: f64,
    pub seed: u64,
}

impl ConstructionConfig {
    pub fn new(punctures: PunctureSet, n_values: Vec<u32>, grid_level: u32) -> Result<Self> {
        let config = ConstructionConfig {
            punctures,
            n_values,
            grid_level,
            solver: SolveOptions::default(),
            tolerances: Tolerances::default(),
            probes: 50,
            probe_step_factor: 5.0,
            seed: 0,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(Error::InvalidInput("n_values is empty".into()));
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(format!(
                "n_values {:?} must be strictly ascending",
                self.n_values
            )));
        }
        if !self.punctures.is_empty() {
            if let Some(n) = self.n_values.iter().find(|n| !n_is_admissible(&self.punctures, **n)) {
                return Err(Error::InvalidInput(format!(
                    "n = {n} is below the admissible minimum {}",
                    minimum_n(&self.punctures)
                )));
            }
        }
        if !(1.0..=5.0).contains(&self.probe_step_factor) {
            return Err(Error::InvalidInput(format!(
                "probe_step_factor {} outside [1, 5]",
                self.probe_step_factor
            )));
        }
        self.solver.validate()
    }
}

/// Least-squares plane through the vertices of a disc region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscPlane {
    pub normal: UnitVector,
    pub offset: f64,
    pub rms: f64,
}

/// A solved body with its facets labelled by region.
#[derive(Debug, Clone)]
pub struct SurfaceDecomposition {
    pub body: ConvexPolytope,
    pub support: SupportVector,
    pub n: u32,
    pub punctures: PunctureSet,
    pub region_of_facet: Vec<NodeRegion>,
    pub disc_planes: Vec<Option<DiscPlane>>,
    pub report: SolveReport,
}

impl SurfaceDecomposition {
    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        self.support.grid()
    }

    pub fn region_area(&self, region: NodeRegion) -> f64 {
        self.body
            .facets()
            .iter()
            .zip(&self.region_of_facet)
            .filter(|(_, r)| **r == region)
            .map(|(f, _)| f.area)
            .sum()
    }

    /// `Σ` of the areas of the `disc(j)` facets.
    pub fn disc_area(&self, j: usize) -> f64 {
        self.region_area(NodeRegion::Disc(j))
    }

    pub fn annulus_area(&self, j: usize) -> f64 {
        self.region_area(NodeRegion::Annulus(j))
    }

    pub fn k_region_area(&self) -> f64 {
        self.region_area(NodeRegion::Sigma)
    }

    pub fn total_area(&self) -> f64 {
        self.body.total_area()
    }

    /// `(K-region, annulus, disc)` facet counts.
    pub fn label_counts(&self) -> (usize, usize, usize) {
        self.region_of_facet.iter().fold((0, 0, 0), |(k, a, d), r| match r {
            NodeRegion::Sigma => (k + 1, a, d),
            NodeRegion::Annulus(_) => (k, a + 1, d),
            NodeRegion::Disc(_) => (k, a, d + 1),
        })
    }

    /// `4π + Σ_j 8π/n² + Σ_j a_j`.
    pub fn area_bound(&self) -> f64 {
        let nf = self.n as f64;
        let m = self.punctures.len() as f64;
        4.0 * PI + m * 8.0 * PI / (nf * nf) + self.punctures.total_weight()
    }

    /// Whether `at` is in the K-region with at least `margin` radians to
    /// every closed cap `B(p_j, 2/n)`.
    pub fn is_k_region(&self, at: &UnitVector, margin: f64) -> bool {
        let outer = (2.0 / self.n as f64).min(1.0).asin();
        self.punctures
            .points()
            .iter()
            .all(|p| spherical_angle(at, p) > outer + margin)
    }

    fn check_probe(&self, at: &UnitVector, step: f64) -> Result<()> {
        let spacing = self.grid().mean_spacing();
        if !(step >= spacing * (1.0 - 1e-12) && step <= 5.0 * spacing * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!(
                "step {step} outside [{spacing}, {}]",
                5.0 * spacing
            )));
        }
        if !self.is_k_region(at, 3.0 * step) {
            return Err(Error::Domain(
                "probe direction is within 3 steps of an annulus".into(),
            ));
        }
        Ok(())
    }

    /// [`hessian_probe`] on the body, with the K-region and step-size
    /// preconditions enforced.
    pub fn probe(&self, at: &UnitVector, step: f64) -> Result<HessianProbe> {
        self.check_probe(at, step)?;
        let mut probe = hessian_probe(&self.body, at, step);
        probe.facet_ratio = step / self.grid().mean_spacing();
        Ok(probe)
    }

    /// `det(∇²h + hI) - 1` at `at`.
    pub fn hessian_residual(&self, at: &UnitVector, step: f64) -> Result<f64> {
        Ok(self.probe(at, step)?.det_residual())
    }

    /// `H_parallel - 1/2` at `at`; `Domain` error if an eigenvalue is negative.
    pub fn parallel_h_check(&self, at: &UnitVector, step: f64) -> Result<f64> {
        self.probe(at, step)?
            .parallel_h_defect()
            .ok_or_else(|| Error::Domain("negative principal radius".into()))
    }

    /// Seeded random K-region probe directions, at least `3·step` from every
    /// annulus.
    pub fn k_region_probes(&self, count: usize, step: f64, seed: u64) -> Vec<UnitVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0;
        while out.len() < count && attempts < 1000 * count.max(1) {
            attempts += 1;
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let len = v.norm();
            if !(len > 0.1 && len <= 1.0) {
                continue;
            }
            let u = UnitVector::from_vec(v).expect("nonzero");
            if self.is_k_region(&u, 3.0 * step) {
                out.push(u);
            }
        }
        out
    }

    /// Curvature-probe statistics over seeded random K-region directions.
    pub fn probe_stats(&self, count: usize, step: f64, seed: u64) -> Result<ProbeStats> {
        let dirs = self.k_region_probes(count, step, seed);
        let probes: Vec<HessianProbe> = dirs
            .par_iter()
            .map(|u| self.probe(u, step))
            .collect::<Result<_>>()?;
        Ok(ProbeStats::from_probes(&probes))
    }

    /// Fraction of K-region normals with a non-empty facet.
    pub fn gauss_coverage(&self) -> f64 {
        gauss_coverage(self)
    }
}

/// Builds `f_n`, solves, realizes and labels.
pub fn construct(
    punctures: &PunctureSet,
    n: u32,
    grid: Arc<QuadratureGrid>,
    options: &SolveOptions,
) -> Result<SurfaceDecomposition> {
    let field = build_density(grid, punctures, n)?;
    let problem = MinkowskiProblem::from_density(&field)?;
    let sol = solve(&problem, options)?;
    let mut d = SurfaceDecomposition {
        body: sol.body,
        support: sol.support,
        n,
        punctures: punctures.clone(),
        region_of_facet: field.regions().to_vec(),
        disc_planes: Vec::new(),
        report: sol.report,
    };
    d.disc_planes = (0..punctures.len())
        .map(|j| disc_plane(&d, j).ok())
        .collect();
    Ok(d)
}

/// [`construct`] on a fresh icosphere of the given level.
pub fn construct_at_level(
    punctures: &PunctureSet,
    n: u32,
    grid_level: u32,
    options: &SolveOptions,
) -> Result<SurfaceDecomposition> {
    let grid = Arc::new(QuadratureGrid::icosphere(grid_level)?);
    construct(punctures, n, grid, options)
}

fn disc_facets(d: &SurfaceDecomposition, j: usize) -> Vec<usize> {
    d.region_of_facet
        .iter()
        .enumerate()
        .filter(|(i, r)| **r == NodeRegion::Disc(j) && !d.body.facets()[*i].is_empty())
        .map(|(i, _)| i)
        .collect()
}

fn disc_plane(d: &SurfaceDecomposition, j: usize) -> Result<DiscPlane> {
    let facets = disc_facets(d, j);
    if facets.is_empty() {
        return Err(Error::Resolution(format!("disc {j} has no realized facets")));
    }
    let mut ids: Vec<usize> = facets
        .iter()
        .flat_map(|&i| d.body.facets()[i].vertex_loop.iter().copied())
        .collect();
    ids.sort_unstable();
    ids.dedup();
    let pts: Vec<Vec3> = ids.iter().map(|&v| d.body.vertices()[v]).collect();
    let c = pts.iter().sum::<Vec3>() / pts.len() as f64;
    let cov = pts
        .iter()
        .fold(Matrix3::zeros(), |acc, p| acc + (p - c) * (p - c).transpose());
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let mut n: Vec3 = eig.eigenvectors.column(k).into_owned();
    if n.dot(d.punctures.points()[j].as_vec()) < 0.0 {
        n = -n;
    }
    let normal = UnitVector::from_vec(n)?;
    let rms = (pts.iter().map(|p| (p - c).dot(&n).powi(2)).sum::<f64>() / pts.len() as f64).sqrt();
    Ok(DiscPlane {
        normal,
        offset: c.dot(&n),
        rms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscMetrics {
    pub area: f64,
    pub plane_rms: f64,
    pub normal_angle: f64,
    pub boundary_convexity_defect: f64,
    pub facet_count: usize,
    pub boundary_vertices: usize,
}

/// Area, flatness and boundary convexity of the disc region `j`.
pub fn disc_metrics(d: &SurfaceDecomposition, j: usize) -> Result<DiscMetrics> {
    if j >= d.punctures.len() {
        return Err(Error::InvalidInput(format!("no puncture {j}")));
    }
    let facets = disc_facets(d, j);
    let plane = disc_plane(d, j)?;
    let n = *plane.normal.as_vec();

    // boundary edges appear in exactly one disc facet
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for &i in &facets {
        let lp = &d.body.facets()[i].vertex_loop;
        for k in 0..lp.len() {
            edges.push((lp[k], lp[(k + 1) % lp.len()]));
        }
    }
    let mut undirected: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    undirected.sort_unstable();
    let interior: std::collections::HashSet<(usize, usize)> = undirected
        .windows(2)
        .filter(|w| w[0] == w[1])
        .map(|w| w[0])
        .collect();
    let boundary: Vec<(usize, usize)> = edges
        .into_iter()
        .filter(|&(a, b)| !interior.contains(&(a.min(b), a.max(b))))
        .collect();
    let loop_ids = longest_loop(&boundary);

    let (e1, e2) = plane.normal.tangent_frame();
    let planar: Vec<[f64; 2]> = loop_ids
        .iter()
        .map(|&v| {
            let p = d.body.vertices()[v];
            [p.dot(&e1), p.dot(&e2)]
        })
        .collect();
    let defect = convexity_defect(&planar);

    Ok(DiscMetrics {
        area: d.disc_area(j),
        plane_rms: plane.rms,
        normal_angle: n.dot(d.punctures.points()[j].as_vec()).clamp(-1.0, 1.0).acos(),
        boundary_convexity_defect: defect,
        facet_count: facets.len(),
        boundary_vertices: loop_ids.len(),
    })
}

/// The longest closed chain of directed edges.
fn longest_loop(edges: &[(usize, usize)]) -> Vec<usize> {
    let mut next: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    for &(a, b) in edges {
        next.insert(a, b);
    }
    let mut seen = std::collections::HashSet::new();
    let mut best: Vec<usize> = Vec::new();
    let mut starts: Vec<usize> = next.keys().copied().collect();
    starts.sort_unstable();
    for s in starts {
        if seen.contains(&s) {
            continue;
        }
        let mut lp = vec![s];
        seen.insert(s);
        let mut cur = s;
        while let Some(&nx) = next.get(&cur) {
            if nx == s || !seen.insert(nx) {
                break;
            }
            lp.push(nx);
            cur = nx;
        }
        if lp.len() > best.len() {
            best = lp;
        }
    }
    best
}

/// Max distance of a planar loop's vertices from the boundary of its convex
/// hull, divided by the loop diameter.
pub fn convexity_defect(pts: &[[f64; 2]]) -> f64 {
    if pts.len() < 3 {
        return 0.0;
    }
    let hull = convex_hull_2d(pts);
    let diam = pts
        .iter()
        .flat_map(|a| pts.iter().map(move |b| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()))
        .fold(0.0, f64::max);
    if diam == 0.0 {
        return 0.0;
    }
    let seg_dist = |p: &[f64; 2], a: &[f64; 2], b: &[f64; 2]| {
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        ((p[0] - a[0] - t * dx).powi(2) + (p[1] - a[1] - t * dy).powi(2)).sqrt()
    };
    pts.iter()
        .map(|p| {
            (0..hull.len())
                .map(|k| seg_dist(p, &hull[k], &hull[(k + 1) % hull.len()]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
        / diam
}

/// Andrew's monotone chain; counterclockwise, collinear points dropped.
fn convex_hull_2d(pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = pts.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for q in &p {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], q) <= 0.0 {
            lower.pop();
        }
        lower.push(*q);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for q in p.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], q) <= 0.0 {
            upper.pop();
        }
        upper.push(*q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// `Σ_j Area(disc j)·p_j`.
pub fn equilibrium_check(d: &SurfaceDecomposition) -> Vec3 {
    d.punctures
        .points()
        .iter()
        .enumerate()
        .fold(Vec3::zeros(), |acc, (j, p)| acc + p.as_vec() * d.disc_area(j))
}

/// `|Σ_j Area_j p_j| / Σ_j Area_j`.
pub fn equilibrium_relative(d: &SurfaceDecomposition) -> f64 {
    let total: f64 = (0..d.punctures.len()).map(|j| d.disc_area(j)).sum();
    if total == 0.0 {
        return 0.0;
    }
    equilibrium_check(d).norm() / total
}

/// Second-difference Hessian of a support function at one direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HessianProbe {
    /// `∇²h + hI` in the tangent frame of `at`.
    pub matrix: [[f64; 2]; 2],
    pub det: f64,
    /// Principal radii of curvature, ascending.
    pub radii: [f64; 2],
    pub step: f64,
    /// Step over mean grid spacing.
    pub facet_ratio: f64,
}

impl HessianProbe {
    /// `det(∇²h + hI) - 1`.
    pub fn det_residual(&self) -> f64 {
        self.det - 1.0
    }

    /// `H - 1/2` for the outer parallel surface at distance 1, or `None`
    /// when a principal radius is negative.
    pub fn parallel_h_defect(&self) -> Option<f64> {
        if self.radii[0] < 0.0 {
            return None;
        }
        Some(parallel_mean_curvature(self.radii[0], self.radii[1]) - 0.5)
    }
}

/// Mean curvature `((1 + ρ₁)⁻¹ + (1 + ρ₂)⁻¹)/2` of the outer parallel
/// surface at distance 1 of a surface with principal radii `ρ₁, ρ₂`.
pub fn parallel_mean_curvature(rho1: f64, rho2: f64) -> f64 {
    (1.0 / (1.0 + rho1) + 1.0 / (1.0 + rho2)) / 2.0
}

/// Geodesic second differences of `s` at `at` along the tangent frame and
/// its diagonals.
pub fn hessian_probe<S: SupportFunction + ?Sized>(s: &S, at: &UnitVector, step: f64) -> HessianProbe {
    let (e1, e2) = at.tangent_frame();
    let h0 = s.support(at.as_vec());
    let second = |dir: &Vec3| {
        let plus = s.support(at.geodesic_offset(dir, step).as_vec());
        let minus = s.support(at.geodesic_offset(dir, -step).as_vec());
        (plus - 2.0 * h0 + minus) / (step * step)
    };
    let d11 = second(&e1);
    let d22 = second(&e2);
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    let dpp = second(&((e1 + e2) * r2));
    let dpm = second(&((e1 - e2) * r2));
    let d12 = (dpp - dpm) / 2.0;
    let m = Matrix2::new(d11 + h0, d12, d12, d22 + h0);
    let eig = SymmetricEigen::new(m);
    let (a, b) = (eig.eigenvalues[0], eig.eigenvalues[1]);
    HessianProbe {
        matrix: [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]],
        det: m.determinant(),
        radii: [a.min(b), a.max(b)],
        step,
        facet_ratio: f64::NAN,
    }
}

/// `det(∇²h + hI) - 1` for any support function.
pub fn hessian_residual<S: SupportFunction + ?Sized>(s: &S, at: &UnitVector, step: f64) -> f64 {
    hessian_probe(s, at, step).det_residual()
}

/// Median and spread of probe results; probes with a negative principal
/// radius are counted but excluded from the parallel-surface statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeStats {
    pub count: usize,
    pub det_median_abs: f64,
    pub det_max_abs: f64,
    pub parallel_median_abs: f64,
    pub parallel_max_abs: f64,
    pub flagged: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

impl ProbeStats {
    pub fn from_probes(probes: &[HessianProbe]) -> Self {
        let det: Vec<f64> = probes.iter().map(|p| p.det_residual().abs()).collect();
        let par: Vec<f64> = probes
            .iter()
            .filter_map(|p| p.parallel_h_defect())
            .map(f64::abs)
            .collect();
        ProbeStats {
            count: probes.len(),
            det_median_abs: median(det.clone()),
            det_max_abs: det.iter().cloned().fold(0.0, f64::max),
            parallel_median_abs: median(par.clone()),
            parallel_max_abs: par.iter().cloned().fold(0.0, f64::max),
            flagged: probes.len() - par.len(),
        }
    }
}

/// Fraction of K-region normals whose facet is non-empty.
pub fn gauss_coverage(d: &SurfaceDecomposition) -> f64 {
    let (total, hit) = d
        .body
        .facets()
        .iter()
        .zip(&d.region_of_facet)
        .filter(|(_, r)| **r == NodeRegion::Sigma)
        .fold((0usize, 0usize), |(t, h), (f, _)| (t + 1, h + usize::from(!f.is_empty())));
    if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    }
}

/// `∇h + h·at` by central differences of the support function.
pub fn recover_point<S: SupportFunction + ?Sized>(s: &S, at: &UnitVector, step: f64) -> Vec3 {
    let (e1, e2) = at.tangent_frame();
    let h0 = s.support(at.as_vec());
    let slope = |dir: &Vec3| {
        let plus = s.support(at.geodesic_offset(dir, step).as_vec());
        let minus = s.support(at.geodesic_offset(dir, -step).as_vec());
        (plus - minus) / (2.0 * step)
    };
    e1 * slope(&e1) + e2 * slope(&e2) + at.as_vec() * h0
}

/// [`recover_point`] on a realized body; directions within `step` of a
/// normal whose facet is empty are reported as non-smooth.
pub fn recover_points(h: &SupportVector, body: &ConvexPolytope, at: &UnitVector, step: f64) -> Result<Vec3> {
    let grid = h.grid();
    let near_empty = grid
        .nodes()
        .iter()
        .zip(body.facets())
        .any(|(u, f)| f.is_empty() && spherical_angle(u, at) <= step);
    if near_empty || body.facets()[grid.nearest(at)].is_empty() {
        return Err(Error::NonSmooth);
    }
    Ok(recover_point(body, at, step))
}

/// Hausdorff distance between a body and its rotations about `axis`,
/// maximized over the given angles.
pub fn rotational_symmetry_defect(
    body: &ConvexPolytope,
    axis: &UnitVector,
    angles: &[f64],
    sample: &QuadratureGrid,
) -> f64 {
    let a = *axis.as_vec();
    angles
        .iter()
        .map(|&t| {
            let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(a), t);
            let rotated = |x: &Vec3| body.support(&(rot.inverse() * x));
            hausdorff_distance(body, &rotated, sample)
        })
        .fold(0.0, f64::max)
}

/// One named check with its measured value and bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionOutcome {
    pub name: String,
    pub claim: String,
    pub n: Option<u32>,
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
}

impl AssertionOutcome {
    /// Passes when `measured < bound` (or `<=` if `inclusive`).
    pub fn upper(name: &str, claim: &str, n: Option<u32>, measured: f64, bound: f64, inclusive: bool) -> Self {
        let passed = if inclusive { measured <= bound } else { measured < bound };
        AssertionOutcome {
            name: name.into(),
            claim: claim.into(),
            n,
            measured,
            bound,
            passed,
        }
    }

    pub fn lower(name: &str, claim: &str, n: Option<u32>, measured: f64, bound: f64) -> Self {
        AssertionOutcome {
            name: name.into(),
            claim: claim.into(),
            n,
            measured,
            bound,
            passed: measured >= bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NRecord {
    pub n: u32,
    pub disc_areas: Vec<f64>,
    pub annulus_areas: Vec<f64>,
    pub k_region_area: f64,
    pub total_area: f64,
    pub area_bound: f64,
    pub volume: f64,
    pub diameter: f64,
    pub inradius: f64,
    pub equilibrium_defect: [f64; 3],
    pub equilibrium_relative: f64,
    pub disc_metrics: Vec<Option<DiscMetrics>>,
    pub probe_stats: Option<ProbeStats>,
    pub gauss_coverage: f64,
    pub iterations: usize,
    pub final_residual: f64,
    pub wall_time: f64,
    /// Hausdorff distance to the previous completed body, both recentered.
    pub hausdorff_prev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub n: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub records: Vec<NRecord>,
    pub failures: Vec<SweepFailure>,
    pub assertions: Vec<AssertionOutcome>,
}

impl ConvergenceReport {
    pub fn all_passed(&self) -> bool {
        self.failures.is_empty() && self.assertions.iter().all(|a| a.passed)
    }
}

/// Summary record of one solved body.
pub fn record(d: &SurfaceDecomposition, probes: usize, step_factor: f64, seed: u64) -> Result<NRecord> {
    let m = d.punctures.len();
    let step = step_factor * d.grid().mean_spacing();
    let probe_stats = if probes > 0 {
        Some(d.probe_stats(probes, step, seed)?)
    } else {
        None
    };
    let eq = equilibrium_check(d);
    Ok(NRecord {
        n: d.n,
        disc_areas: (0..m).map(|j| d.disc_area(j)).collect(),
        annulus_areas: (0..m).map(|j| d.annulus_area(j)).collect(),
        k_region_area: d.k_region_area(),
        total_area: d.total_area(),
        area_bound: d.area_bound(),
        volume: d.body.volume(),
        diameter: d.body.diameter(),
        inradius: d.body.inradius()?.0,
        equilibrium_defect: [eq.x, eq.y, eq.z],
        equilibrium_relative: equilibrium_relative(d),
        disc_metrics: (0..m).map(|j| disc_metrics(d, j).ok()).collect(),
        probe_stats,
        gauss_coverage: gauss_coverage(d),
        iterations: d.report.iterations,
        final_residual: d.report.final_residual,
        wall_time: d.report.wall_time,
        hausdorff_prev: None,
    })
}

/// Constructs every `n` of the config and checks the per-`n` bounds.
///
/// A failed solve is recorded and the sweep continues. Returns the report
/// and the decompositions that completed, in ascending `n`.
pub fn run_sweep(config: &ConstructionConfig) -> Result<(ConvergenceReport, Vec<SurfaceDecomposition>)> {
    config.validate()?;
    let grid = Arc::new(QuadratureGrid::icosphere(config.grid_level)?);
    let results: Vec<(u32, Result<(SurfaceDecomposition, NRecord)>)> = config
        .n_values
        .par_iter()
        .map(|&n| {
            let out = construct(&config.punctures, n, grid.clone(), &config.solver)
                .and_then(|d| {
                    let r = record(&d, config.probes, config.probe_step_factor, config.seed ^ n as u64)?;
                    Ok((d, r))
                });
            (n, out)
        })
        .collect();

    let mut bodies = Vec::new();
    let mut records: Vec<NRecord> = Vec::new();
    let mut failures = Vec::new();
    for (n, res) in results {
        match res {
            Ok((d, r)) => {
                bodies.push(d);
                records.push(r);
            }
            Err(e) => failures.push(SweepFailure { n, error: e.to_string() }),
        }
    }
    for k in 1..bodies.len() {
        records[k].hausdorff_prev = Some(hausdorff_distance(&bodies[k - 1].body, &bodies[k].body, &grid));
    }

    let tol = &config.tolerances;
    let mut assertions = Vec::new();
    if let Some(first) = records.first().cloned() {
        let floor = tol.inradius_floor_factor * first.inradius;
        let ceiling = tol.diameter_ceiling_factor * first.diameter;
        for r in &records {
            let n = Some(r.n);
            assertions.push(AssertionOutcome::upper(
                "total_area_bound",
                "Area(S_n) < 4π + Σ 8π/n² + Σ a_j",
                n,
                r.total_area,
                r.area_bound * (1.0 + tol.area_bound_slack),
                false,
            ));
            assertions.push(AssertionOutcome::lower(
                "inradius_floor",
                "inradius stays above half the first body's",
                n,
                r.inradius,
                floor,
            ));
            assertions.push(AssertionOutcome::upper(
                "diameter_ceiling",
                "diameter stays below twice the first body's",
                n,
                r.diameter,
                ceiling,
                true,
            ));
            let nf = r.n as f64;
            for (j, a) in r.annulus_areas.iter().enumerate() {
                assertions.push(AssertionOutcome::upper(
                    &format!("annulus_area_{j}"),
                    "annulus area below 8π/n²",
                    n,
                    *a,
                    8.0 * PI / (nf * nf) * (1.0 + tol.annulus_slack),
                    false,
                ));
            }
        }
    }
    Ok((
        ConvergenceReport {
            records,
            failures,
            assertions,
        },
        bodies,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::{realize, Ball};

    #[test]
    fn parallel_identity_exact() {
        for rho in [0.5f64, 2.0, 1.0, 3.7, 0.01] {
            let h = parallel_mean_curvature(rho, 1.0 / rho);
            assert!((h - 0.5).abs() <= 1e-15, "{rho}: {h}");
        }
        assert_eq!(parallel_mean_curvature(2.0, 0.5), 0.5);
        assert_eq!(parallel_mean_curvature(1.0, 1.0), 0.5);
        assert!(parallel_mean_curvature(1.0, 2.0) < 0.5);
    }

    #[test]
    fn ball_probe() {
        let at = UnitVector::new(0.3, -0.2, 0.9).unwrap();
        for r in [1.0, 2.5] {
            let ball = Ball {
                center: Vec3::zeros(),
                radius: r,
            };
            let p = hessian_probe(&ball, &at, 0.05);
            assert!((p.det - r * r).abs() < 1e-9);
            assert!((p.radii[0] - r).abs() < 1e-9 && (p.radii[1] - r).abs() < 1e-9);
        }
        let unit = Ball {
            center: Vec3::zeros(),
            radius: 1.0,
        };
        assert!(hessian_residual(&unit, &at, 0.05).abs() < 1e-9);
        assert!(hessian_probe(&unit, &at, 0.05).parallel_h_defect().unwrap().abs() < 1e-9);
    }

    #[test]
    fn linear_term_leaves_residual() {
        let at = UnitVector::new(-0.4, 0.1, 0.6).unwrap();
        let c = Vec3::new(0.3, -0.7, 0.2);
        let step = 0.04;
        let ball = Ball {
            center: Vec3::zeros(),
            radius: 1.0,
        };
        let shifted = Ball { center: c, radius: 1.0 };
        let a = hessian_residual(&ball, &at, step);
        let b = hessian_residual(&shifted, &at, step);
        assert!((a - b).abs() < step * step, "{a} vs {b}");
    }

    #[test]
    fn recover_ball_and_translate() {
        let at = UnitVector::new(0.2, 0.5, -0.8).unwrap();
        let ball = Ball {
            center: Vec3::zeros(),
            radius: 1.0,
        };
        let x = recover_point(&ball, &at, 1e-3);
        assert!((x - at.as_vec()).norm() < 1e-6);
        let c = Vec3::new(1.0, -2.0, 0.5);
        let shifted = Ball { center: c, radius: 1.0 };
        let y = recover_point(&shifted, &at, 1e-3);
        assert!((y - at.as_vec() - c).norm() < 1e-6);
    }

    #[test]
    fn recover_cube_face() {
        let grid = crate::polytope::tests::cube_grid();
        let h = SupportVector::constant(grid, 0.5);
        let body = realize(&h).unwrap();
        let x = recover_points(&h, &body, &UnitVector::x_axis(), 0.01).unwrap();
        assert!((x.x - 0.5).abs() < 1e-12);
    }

    #[test]
    fn convexity_of_square_and_notch() {
        let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert_eq!(convexity_defect(&square), 0.0);
        let notched = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.5, 0.8], [0.0, 1.0]];
        let d = convexity_defect(&notched);
        assert!((d - 0.2 / 2f64.sqrt()).abs() < 1e-12, "{d}");
    }

    #[test]
    fn longest_loop_picks_outer() {
        let edges = [(0, 1), (1, 2), (2, 3), (3, 0), (10, 11), (11, 12), (12, 10)];
        let lp = longest_loop(&edges);
        assert_eq!(lp, vec![0, 1, 2, 3]);
    }

    #[test]
    fn config_validation() {
        let set = PunctureSet::new(
            vec![UnitVector::z_axis(), UnitVector::z_axis().negated()],
            vec![4.0, 4.0],
        )
        .unwrap();
        assert!(ConstructionConfig::new(set.clone(), vec![], 3).is_err());
        assert!(ConstructionConfig::new(set.clone(), vec![8, 4], 3).is_err());
        assert!(ConstructionConfig::new(set.clone(), vec![2, 8], 3).is_err());
        assert!(ConstructionConfig::new(set, vec![4, 8], 3).is_ok());
    }

    #[test]
    fn round_sphere_control() {
        let grid = Arc::new(QuadratureGrid::icosphere(3).unwrap());
        let d = construct(
            &PunctureSet::round_sphere(),
            1,
            grid.clone(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(d.label_counts(), (1280, 0, 0));
        assert_eq!(gauss_coverage(&d), 1.0);
        let ball = Ball {
            center: Vec3::zeros(),
            radius: 1.0,
        };
        assert!(hausdorff_distance(&d.body, &ball, &grid) < 0.01);
        assert!((d.k_region_area() - d.total_area()).abs() < 1e-12);
    }
}
