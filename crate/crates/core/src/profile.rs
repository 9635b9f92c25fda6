//! Equilibrium data and the singular curvature densities.
//!
//! Given directions `p_j` and weights `a_j > 0` with `Σ a_j p_j = 0`, the
//! density `f_n = 1/κ_n` is `a_j n²/π` on the caps `B(p_j, 1/n)`, equal to 1
//! away from the caps `B(p_j, 2/n)`, and interpolates monotonically across
//! each annulus so that the annulus carries the flux `(4π/n²) p_j`. Those
//! three pieces balance, which is what makes the Minkowski problem for
//! `κ_n` solvable.

use std::f64::consts::PI;
use std::sync::Arc;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{sin_cos_between, spherical_angle, QuadratureGrid, SphericalCap, UnitVector, Vec3};

/// Default equilibrium tolerance `‖Σ a_j p_j‖`.
pub const EQUILIBRIUM_TOL: f64 = 1e-10;
/// Minimal pairwise angle between distinct punctures.
pub const MIN_POINT_SEPARATION: f64 = 1e-6;
/// Safety factor on the cap-disjointness condition.
pub const DISJOINT_MARGIN: f64 = 1.1;
/// Relative tolerance of the transition flux solve.
pub const FLUX_TOL: f64 = 1e-8;
/// Relative tolerance of the global closure `‖Σ w f u‖ / Σ w f`.
pub const CLOSURE_TOL: f64 = 1e-9;
/// Fewest grid nodes allowed inside a disc cap.
pub const MIN_CAP_NODES: usize = 12;
/// Fewest grid nodes allowed inside an annulus.
pub const MIN_ANNULUS_NODES: usize = 8;

/// Puncture directions `p_j` with positive weights `a_j` in equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PunctureSet {
    points: Vec<UnitVector>,
    weights: Vec<f64>,
}

impl PunctureSet {
    pub fn new(points: Vec<UnitVector>, weights: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(points, weights, EQUILIBRIUM_TOL)
    }

    pub fn with_tolerance(points: Vec<UnitVector>, weights: Vec<f64>, tol: f64) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        match points.len() {
            0 => {
                return Err(Error::InvalidInput(
                    "no punctures given; use PunctureSet::round_sphere".into(),
                ))
            }
            1 => {
                return Err(Error::InvalidInput(
                    "a single puncture can never be in equilibrium".into(),
                ))
            }
            _ => {}
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput(format!("weight {w} is not positive")));
        }
        check_distinct(&points)?;
        let defect = weighted_sum(&points, &weights).norm();
        if defect > tol {
            return Err(Error::InvalidInput(format!(
                "weights are not in equilibrium: |Σ a_j p_j| = {defect:e} > {tol:e}"
            )));
        }
        Ok(PunctureSet { points, weights })
    }

    /// Weights from [`find_equilibrium_weights`].
    pub fn from_points(points: Vec<UnitVector>) -> Result<Self> {
        let weights = find_equilibrium_weights(&points)?;
        Self::new(points, weights)
    }

    /// No punctures: the round-sphere control case.
    pub fn round_sphere() -> Self {
        PunctureSet {
            points: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[UnitVector] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ a_j p_j`.
    pub fn equilibrium_defect(&self) -> Vec3 {
        weighted_sum(&self.points, &self.weights)
    }

    /// Disc cap `B(p_j, 1/n)`.
    pub fn disc_cap(&self, j: usize, n: u32) -> Result<SphericalCap> {
        SphericalCap::new(self.points[j], 1.0 / n as f64)
    }

    /// Outer cap `B(p_j, 2/n)`.
    pub fn outer_cap(&self, j: usize, n: u32) -> Result<SphericalCap> {
        SphericalCap::new(self.points[j], 2.0 / n as f64)
    }

    /// Region of a direction for construction index `n`.
    pub fn classify(&self, p: &UnitVector, n: u32) -> NodeRegion {
        let r = 1.0 / n as f64;
        for (j, q) in self.points.iter().enumerate() {
            let (sin, cos) = sin_cos_between(p, q);
            if sin < r && cos > 0.0 {
                return NodeRegion::Disc(j);
            }
            if sin <= 2.0 * r && cos >= 0.0 {
                return NodeRegion::Annulus(j);
            }
        }
        NodeRegion::Sigma
    }
}

/// Where a direction sits relative to the punctures.
///
/// `Disc(j)` is `B(p_j, 1/n)`, `Annulus(j)` the rest of the closed cap
/// `B(p_j, 2/n)`, and `Sigma` everything else. On the measure-zero circle
/// `sin∠ = 1/n` this differs from the open annulus `A(p_j, 1/n)`; the profile
/// takes the value `λ` there, so nothing depends on the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeRegion {
    Sigma,
    Annulus(usize),
    Disc(usize),
}

fn weighted_sum(points: &[UnitVector], weights: &[f64]) -> Vec3 {
    points
        .iter()
        .zip(weights)
        .fold(Vec3::zeros(), |acc, (p, a)| acc + p.as_vec() * *a)
}

fn check_distinct(points: &[UnitVector]) -> Result<()> {
    for (i, p) in points.iter().enumerate() {
        for (k, q) in points[i + 1..].iter().enumerate() {
            if spherical_angle(p, q) <= MIN_POINT_SEPARATION {
                return Err(Error::InvalidInput(format!(
                    "points {i} and {} coincide",
                    i + 1 + k
                )));
            }
        }
    }
    Ok(())
}

/// Positive weights `a_j` with `Σ a_j p_j = 0`, normalized so `min a_j = 1`.
///
/// Among all solutions with `a_j >= 1` the one of least Euclidean norm is
/// returned; it is found by Dykstra's alternating projections between the
/// null space of `[p_1 ... p_m]` and the box `a >= 1`, starting from zero.
pub fn find_equilibrium_weights(points: &[UnitVector]) -> Result<Vec<f64>> {
    let m = points.len();
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least two points, got {m}"
        )));
    }
    check_distinct(points)?;
    if let Some(w) = half_space_witness(points) {
        return Err(Error::NoEquilibrium { direction: w });
    }

    let p = DMatrix::from_fn(3, m, |r, c| points[c].as_vec()[r]);
    let gram = Matrix3::from_iterator((&p * p.transpose()).iter().copied());
    let eig = SymmetricEigen::new(gram);
    let cutoff = 1e-12 * eig.eigenvalues.max().max(1e-300);
    let mut pinv = Matrix3::zeros();
    for k in 0..3 {
        let lam = eig.eigenvalues[k];
        if lam > cutoff {
            let v = eig.eigenvectors.column(k);
            pinv += v * v.transpose() / lam;
        }
    }
    let project_null = |v: &DVector<f64>| -> DVector<f64> {
        let pv = &p * v;
        let y = pinv * Vec3::new(pv[0], pv[1], pv[2]);
        v - p.transpose() * DVector::from_column_slice(y.as_slice())
    };

    let mut x = DVector::zeros(m);
    let mut inc_box = DVector::zeros(m);
    let mut inc_null = DVector::zeros(m);
    for _ in 0..1_000_000 {
        let y = (&x + &inc_box).map(|v: f64| v.max(1.0));
        inc_box = &x + &inc_box - &y;
        let x_next = project_null(&(&y + &inc_null));
        inc_null = &y + &inc_null - &x_next;
        let change = (&x_next - &x).norm();
        x = x_next;
        if change <= 1e-15 * x.norm().max(1.0) && (&x - &y).norm() <= 1e-13 * x.norm() {
            break;
        }
    }
    let x = project_null(&x);
    let min = x.min();
    if !(min > 0.0) {
        let w = half_space_witness(points).unwrap_or([0.0; 3]);
        return Err(Error::NoEquilibrium { direction: w });
    }
    let weights: Vec<f64> = x.iter().map(|a| a / min).collect();
    let defect = weighted_sum(points, &weights).norm();
    if defect > EQUILIBRIUM_TOL {
        return Err(Error::InvalidInput(format!(
            "equilibrium weights inaccurate: |Σ a_j p_j| = {defect:e}"
        )));
    }
    Ok(weights)
}

/// A direction `w` with `<p_j, w> >= 0` for all `j` and `> 0` for some, when
/// one exists. By Gordan's alternative this is exactly the case in which no
/// strictly positive equilibrium weights exist.
pub fn half_space_witness(points: &[UnitVector]) -> Option<[f64; 3]> {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let sum = points.iter().fold(Vec3::zeros(), |acc, p| acc + p.as_vec());
    let w: Vec<_> = (0..3).map(|k| lp.add_var(sum[k], (-1.0, 1.0))).collect();
    for p in points {
        let v = p.as_vec();
        lp.add_constraint(&[(w[0], v.x), (w[1], v.y), (w[2], v.z)], ComparisonOp::Ge, 0.0);
    }
    let sol = lp.solve().ok()?;
    if sol.objective() > 1e-9 {
        let dir = Vec3::new(sol[w[0]], sol[w[1]], sol[w[2]]).normalize();
        Some([dir.x, dir.y, dir.z])
    } else {
        None
    }
}

/// Smallest `n` with `1/n² < 3 a_j / (4π)` for all `j` and the closed caps
/// `B(p_j, 2/n)` pairwise disjoint with a 10% angular margin.
pub fn minimum_n(punctures: &PunctureSet) -> u32 {
    (1..)
        .find(|&n| n_is_admissible(punctures, n))
        .expect("some n is always admissible")
}

pub fn n_is_admissible(punctures: &PunctureSet, n: u32) -> bool {
    if punctures.is_empty() {
        return n >= 1;
    }
    let nf = n as f64;
    let outer = 2.0 / nf;
    if outer >= 1.0 {
        return false;
    }
    if punctures
        .weights
        .iter()
        .any(|a| 1.0 / (nf * nf) >= 3.0 * a / (4.0 * PI))
    {
        return false;
    }
    let needed = DISJOINT_MARGIN * 2.0 * outer.asin();
    let pts = &punctures.points;
    pts.iter().enumerate().all(|(i, p)| {
        pts[i + 1..]
            .iter()
            .all(|q| spherical_angle(p, q) > needed)
    })
}

/// Quintic smoothstep, `C²` at both ends.
#[inline]
fn smoothstep(x: f64) -> f64 {
    x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
}

/// Radial density across an annulus, as a function of `s = sin∠(p, q)`:
/// `λ` on `[0, r]`, 1 from `2r` on, and
/// `1 + (λ - 1)·S((2r - s)/r)^θ` in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionProfile {
    pub r: f64,
    pub lambda: f64,
    pub mu: f64,
    pub shape_param: f64,
    pub epsilon: f64,
    /// Discrete annulus flux along `q` achieved by the solved profile.
    pub achieved_flux: f64,
    /// Tangential part of the discrete annulus flux (not enforced).
    pub tangential_flux: [f64; 3],
}

impl TransitionProfile {
    pub fn value(&self, s: f64) -> f64 {
        profile_value(self.r, self.lambda, self.shape_param, s)
    }
}

fn profile_value(r: f64, lambda: f64, theta: f64, s: f64) -> f64 {
    let x = ((2.0 * r - s) / r).clamp(0.0, 1.0);
    if x >= 1.0 {
        return lambda;
    }
    if x <= 0.0 {
        return 1.0;
    }
    1.0 + (lambda - 1.0) * smoothstep(x).powf(theta)
}

/// Node indices of the closed cap `B(q, 2r)` outside `B(q, r)`.
fn annulus_nodes(grid: &QuadratureGrid, q: &UnitVector, r: f64) -> Vec<(usize, f64, f64)> {
    grid.nodes()
        .iter()
        .enumerate()
        .filter_map(|(i, u)| {
            let (sin, cos) = sin_cos_between(u, q);
            let in_disc = sin < r && cos > 0.0;
            let in_outer = sin <= 2.0 * r && cos >= 0.0;
            (in_outer && !in_disc).then_some((i, sin, cos))
        })
        .collect()
}

/// Finds the shape parameter whose profile carries annulus flux `mu` along
/// `q` on this grid.
///
/// The flux is strictly decreasing in the shape parameter, from the `f ≡ λ`
/// endpoint toward the `f ≡ 1` endpoint, so the solve is a bisection in
/// `log θ`.
pub fn solve_transition(
    r: f64,
    lambda: f64,
    mu: f64,
    grid: &QuadratureGrid,
    q: &UnitVector,
) -> Result<TransitionProfile> {
    if !(r > 0.0 && r < 0.5) {
        return Err(Error::InvalidInput(format!("transition radius {r} outside (0, 1/2)")));
    }
    if !(lambda > 1.0) {
        return Err(Error::InvalidInput(format!("lambda {lambda} must exceed 1")));
    }
    let (lo_cont, hi_cont) = (3.0 * PI * r * r, 3.0 * PI * r * r * lambda);
    if !(mu > lo_cont && mu < hi_cont) {
        return Err(Error::FluxUnreachable {
            mu,
            lo: lo_cont,
            hi: hi_cont,
        });
    }
    let nodes = annulus_nodes(grid, q, r);
    if nodes.len() < MIN_ANNULUS_NODES {
        return Err(Error::Resolution(format!(
            "annulus of radius {r} holds {} nodes, need {MIN_ANNULUS_NODES}",
            nodes.len()
        )));
    }
    let w = grid.weights();
    let terms: Vec<(f64, f64)> = nodes
        .iter()
        .map(|&(i, sin, cos)| (w[i] * cos, sin))
        .collect();
    let flux = |theta: f64| -> f64 {
        terms
            .iter()
            .map(|(c, s)| c * profile_value(r, lambda, theta, *s))
            .sum()
    };
    let base: f64 = terms.iter().map(|(c, _)| c).sum();
    let (lo, hi) = (base, lambda * base);
    if !(mu > lo && mu < hi) {
        return Err(Error::FluxUnreachable { mu, lo, hi });
    }

    let (mut t_lo, mut t_hi) = (-200.0f64, 200.0f64);
    let (mut f_lo, mut f_hi) = (flux(t_lo.exp()), flux(t_hi.exp()));
    if !(f_hi <= mu && mu <= f_lo) {
        return Err(Error::FluxUnreachable { mu, lo: f_hi, hi: f_lo });
    }
    let tol = FLUX_TOL * mu;
    let mut t = 0.0;
    let mut f = flux(1.0);
    for _ in 0..400 {
        t = 0.5 * (t_lo + t_hi);
        f = flux(t.exp());
        if !(f <= f_lo && f >= f_hi) {
            return Err(Error::Domain(format!(
                "annulus flux is not monotone in the shape parameter near log θ = {t}"
            )));
        }
        if (f - mu).abs() <= tol {
            break;
        }
        if f > mu {
            t_lo = t;
            f_lo = f;
        } else {
            t_hi = t;
            f_hi = f;
        }
    }
    if (f - mu).abs() > tol {
        return Err(Error::Domain(format!(
            "transition solve stalled with flux residual {:e}",
            (f - mu).abs()
        )));
    }
    let theta = t.exp();
    let qv = q.as_vec();
    let tangential = nodes.iter().fold(Vec3::zeros(), |acc, &(i, sin, cos)| {
        let u = grid.node(i).as_vec();
        acc + (u - qv * cos) * (w[i] * profile_value(r, lambda, theta, sin))
    });
    Ok(TransitionProfile {
        r,
        lambda,
        mu,
        shape_param: theta,
        epsilon: r / 4.0,
        achieved_flux: f,
        tangential_flux: [tangential.x, tangential.y, tangential.z],
    })
}

/// The density `f_n` sampled on a grid.
#[derive(Debug, Clone)]
pub struct DensityField {
    grid: Arc<QuadratureGrid>,
    values: Vec<f64>,
    regions: Vec<NodeRegion>,
    n: u32,
    punctures: PunctureSet,
    profiles: Vec<TransitionProfile>,
    correction: Vec3,
    raw_defect: Vec3,
}

impl DensityField {
    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn regions(&self) -> &[NodeRegion] {
        &self.regions
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn punctures(&self) -> &PunctureSet {
        &self.punctures
    }

    pub fn profiles(&self) -> &[TransitionProfile] {
        &self.profiles
    }

    /// Curvature `κ_n = 1/f_n` per node.
    pub fn curvature(&self) -> Vec<f64> {
        self.values.iter().map(|f| 1.0 / f).collect()
    }

    /// The hinge vector `d` of the closure correction
    /// `f ← f·(1 + max(0, <u, d>))` on `Σ_n` nodes.
    pub fn correction(&self) -> Vec3 {
        self.correction
    }

    /// `Σ w f u` before the closure correction.
    pub fn raw_defect(&self) -> Vec3 {
        self.raw_defect
    }

    /// `Σ w_i f(u_i)`.
    pub fn total_mass(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.weights())
            .map(|(f, w)| f * w)
            .sum()
    }

    /// Target facet areas `F_i = f(u_i) w_i`.
    pub fn target_areas(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(self.grid.weights())
            .map(|(f, w)| f * w)
            .collect()
    }
}

/// Density on the disc cap `B(p_j, 1/n)`.
///
/// The nominal value `a_j n²/π` is scaled by the ratio of the exact cap area
/// to the quadrature weight of the disc nodes, so the discrete disc mass
/// equals `(a_j n²/π)·Area(B(p_j, 1/n))` rather than inheriting the
/// node-counting error of the cap boundary.
pub fn disc_density(
    grid: &QuadratureGrid,
    regions: &[NodeRegion],
    punctures: &PunctureSet,
    j: usize,
    n: u32,
) -> Result<f64> {
    let nf = n as f64;
    let nominal = punctures.weights[j] * nf * nf / PI;
    let discrete: f64 = grid
        .weights()
        .iter()
        .zip(regions)
        .filter(|(_, r)| **r == NodeRegion::Disc(j))
        .map(|(w, _)| w)
        .sum();
    if !(discrete > 0.0) {
        return Err(Error::Resolution(format!("cap B(p_{j}, 1/{n}) holds no nodes")));
    }
    Ok(nominal * punctures.disc_cap(j, n)?.area() / discrete)
}

/// Assembles `f_n` from one transition profile per puncture, then removes the
/// discrete closure defect with a one-sided correction on `Σ_n`.
pub fn build_density(
    grid: Arc<QuadratureGrid>,
    punctures: &PunctureSet,
    n: u32,
) -> Result<DensityField> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    if !punctures.is_empty() && !n_is_admissible(punctures, n) {
        return Err(Error::InvalidInput(format!(
            "n = {n} is below the admissible minimum {}",
            minimum_n(punctures)
        )));
    }
    let nf = n as f64;
    let r = 1.0 / nf;

    let regions: Vec<NodeRegion> = grid
        .nodes()
        .par_iter()
        .map(|u| punctures.classify(u, n))
        .collect();
    for j in 0..punctures.len() {
        let count = regions.iter().filter(|g| **g == NodeRegion::Disc(j)).count();
        if count < MIN_CAP_NODES {
            return Err(Error::Resolution(format!(
                "cap B(p_{j}, 1/{n}) holds {count} nodes, need {MIN_CAP_NODES}"
            )));
        }
    }

    let profiles: Vec<TransitionProfile> = (0..punctures.len())
        .into_par_iter()
        .map(|j| {
            let lambda = disc_density(&grid, &regions, punctures, j, n)?;
            let mu = 4.0 * PI / (nf * nf);
            solve_transition(r, lambda, mu, &grid, &punctures.points[j])
        })
        .collect::<Result<_>>()?;

    let mut values: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(&regions)
        .map(|(u, region)| match *region {
            NodeRegion::Sigma => 1.0,
            NodeRegion::Disc(j) => profiles[j].lambda,
            NodeRegion::Annulus(j) => {
                let (sin, _) = sin_cos_between(u, &punctures.points[j]);
                profiles[j].value(sin)
            }
        })
        .collect();

    let moment = |values: &[f64]| {
        grid.nodes()
            .iter()
            .zip(grid.weights())
            .zip(values)
            .fold(Vec3::zeros(), |acc, ((u, w), f)| acc + u.as_vec() * (w * f))
    };
    let raw_defect = moment(&values);
    let mass: f64 = values.iter().zip(grid.weights()).map(|(f, w)| f * w).sum();
    let d = hinge_corrector(&grid, &regions, raw_defect, mass)?;
    for ((f, u), region) in values.iter_mut().zip(grid.nodes()).zip(&regions) {
        if *region == NodeRegion::Sigma {
            *f *= 1.0 + u.as_vec().dot(&d).max(0.0);
        }
    }
    let field = DensityField {
        grid: grid.clone(),
        values,
        regions,
        n,
        punctures: punctures.clone(),
        profiles,
        correction: d,
        raw_defect,
    };
    let defect = closure_defect(&field).norm();
    let bound = CLOSURE_TOL * field.total_mass();
    if defect > bound {
        return Err(Error::ClosureViolated { defect, bound });
    }
    Ok(field)
}

/// Solves `Σ_{Σ_n} w max(0, <u, d>) u = -defect` for `d` by Newton's method;
/// the map is piecewise linear in `d`.
fn hinge_corrector(
    grid: &QuadratureGrid,
    regions: &[NodeRegion],
    defect: Vec3,
    mass: f64,
) -> Result<Vec3> {
    let tol = 1e-15 * mass;
    if defect.norm() <= tol {
        return Ok(Vec3::zeros());
    }
    let sigma: Vec<(Vec3, f64)> = grid
        .nodes()
        .iter()
        .zip(grid.weights())
        .zip(regions)
        .filter(|(_, r)| **r == NodeRegion::Sigma)
        .map(|((u, w), _)| (*u.as_vec(), *w))
        .collect();
    let mut d = -defect * (3.0 / (2.0 * PI));
    for _ in 0..100 {
        let mut phi = Vec3::zeros();
        let mut jac = Matrix3::zeros();
        for (u, w) in &sigma {
            let s = u.dot(&d);
            if s > 0.0 {
                phi += u * (w * s);
                jac += u * u.transpose() * *w;
            }
        }
        let resid = phi + defect;
        if resid.norm() <= tol {
            return Ok(d);
        }
        let step = jac
            .try_inverse()
            .ok_or_else(|| Error::Domain("closure correction is singular".into()))?
            * resid;
        d -= step;
    }
    Ok(d)
}

/// `Σ w_i f(u_i) u_i`.
pub fn closure_defect(field: &DensityField) -> Vec3 {
    field
        .grid
        .nodes()
        .iter()
        .zip(field.grid.weights())
        .zip(&field.values)
        .fold(Vec3::zeros(), |acc, ((u, w), f)| acc + u.as_vec() * (w * f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uv(x: f64, y: f64, z: f64) -> UnitVector {
        UnitVector::new(x, y, z).unwrap()
    }

    fn tetrahedron() -> Vec<UnitVector> {
        vec![
            uv(1.0, 1.0, 1.0),
            uv(1.0, -1.0, -1.0),
            uv(-1.0, 1.0, -1.0),
            uv(-1.0, -1.0, 1.0),
        ]
    }

    fn antipodal(a: f64) -> PunctureSet {
        PunctureSet::new(vec![UnitVector::z_axis(), UnitVector::z_axis().negated()], vec![a, a]).unwrap()
    }

    #[test]
    fn antipodal_weights_are_equal() {
        let p = uv(0.3, -0.4, 0.5);
        let w = find_equilibrium_weights(&[p, p.negated()]).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12 && (w[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tetrahedral_weights_are_equal() {
        let w = find_equilibrium_weights(&tetrahedron()).unwrap();
        for a in w {
            assert!((a - 1.0).abs() < 1e-9, "{a}");
        }
    }

    #[test]
    fn orthant_points_have_no_equilibrium() {
        let pts = [UnitVector::x_axis(), UnitVector::y_axis(), UnitVector::z_axis()];
        match find_equilibrium_weights(&pts) {
            Err(Error::NoEquilibrium { direction }) => {
                let w = Vec3::from(direction);
                for p in &pts {
                    assert!(p.as_vec().dot(&w) >= -1e-12);
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn boundary_configuration_has_no_positive_weights() {
        // the origin lies on the segment [e1, -e1]; a_3 would have to vanish
        let pts = [UnitVector::x_axis(), UnitVector::x_axis().negated(), UnitVector::y_axis()];
        assert!(matches!(
            find_equilibrium_weights(&pts),
            Err(Error::NoEquilibrium { .. })
        ));
    }

    #[test]
    fn generic_weights_balance() {
        let pts = vec![
            uv(1.0, 0.2, 0.1),
            uv(-0.5, 0.9, -0.3),
            uv(-0.4, -0.8, 0.2),
            uv(0.1, 0.1, -1.0),
            uv(0.0, -0.2, 1.0),
        ];
        let w = find_equilibrium_weights(&pts).unwrap();
        let min = w.iter().cloned().fold(f64::MAX, f64::min);
        assert!((min - 1.0).abs() < 1e-15);
        assert!(weighted_sum(&pts, &w).norm() <= 1e-10);
    }

    #[test]
    fn single_puncture_rejected() {
        assert!(PunctureSet::new(vec![UnitVector::z_axis()], vec![1.0]).is_err());
        assert!(PunctureSet::new(
            vec![UnitVector::z_axis(), UnitVector::x_axis()],
            vec![1.0, 1.0]
        )
        .is_err());
    }

    /// Direct evaluation of both admissibility conditions.
    fn admissible_oracle(weights: &[f64], min_angle: f64, n: u32) -> bool {
        let nf = n as f64;
        let a_ok = weights.iter().all(|a| 1.0 / (nf * nf) < 3.0 * a / (4.0 * PI));
        let b_ok = 2.0 / nf < 1.0 && min_angle > 1.1 * 2.0 * (2.0 / nf).asin();
        a_ok && b_ok
    }

    #[test]
    fn minimum_n_antipodal() {
        let p = antipodal(4.0);
        // n = 1, 2 fail (closed hemispheres touch), n = 3 passes
        assert!(!admissible_oracle(&[4.0, 4.0], PI, 1));
        assert!(!admissible_oracle(&[4.0, 4.0], PI, 2));
        assert!(admissible_oracle(&[4.0, 4.0], PI, 3));
        assert_eq!(minimum_n(&p), 3);
    }

    #[test]
    fn minimum_n_close_points() {
        // two points 0.1 rad apart, balanced by a heavy third point
        let a = uv(0.05f64.sin(), 0.0, 0.05f64.cos());
        let b = uv(-(0.05f64.sin()), 0.0, 0.05f64.cos());
        let pts = vec![a, b, UnitVector::z_axis().negated()];
        let set = PunctureSet::from_points(pts).unwrap();
        let n0 = minimum_n(&set);
        let oracle = (1..1000)
            .find(|&n| admissible_oracle(set.weights(), 0.1, n))
            .unwrap();
        assert_eq!(n0, oracle);
        assert!(n0 >= (2.0 / 0.05f64.sin()).ceil() as u32);
    }

    #[test]
    fn large_weights_leave_disjointness_binding() {
        assert_eq!(minimum_n(&antipodal(1e6)), minimum_n(&antipodal(4.0)));
        // tiny weights make the curvature condition bind
        let small = antipodal(0.01);
        let n0 = minimum_n(&small);
        assert!(n0 > 3);
        assert!(admissible_oracle(&[0.01, 0.01], PI, n0));
        assert!(!admissible_oracle(&[0.01, 0.01], PI, n0 - 1));
    }

    #[test]
    fn profile_shape() {
        let prof = TransitionProfile {
            r: 0.1,
            lambda: 5.0,
            mu: 0.0,
            shape_param: 1.7,
            epsilon: 0.025,
            achieved_flux: 0.0,
            tangential_flux: [0.0; 3],
        };
        assert_eq!(prof.value(0.0), 5.0);
        assert_eq!(prof.value(0.1), 5.0);
        assert_eq!(prof.value(0.2), 1.0);
        assert_eq!(prof.value(0.2 + prof.epsilon), 1.0);
        let mut last = f64::INFINITY;
        for k in 0..=100 {
            let v = prof.value(0.1 + 0.001 * k as f64);
            assert!((1.0..=5.0).contains(&v));
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn transition_endpoints_and_root() {
        let grid = QuadratureGrid::icosphere(5).unwrap();
        let q = uv(0.2, 0.3, 0.9);
        let (r, lambda) = (1.0 / 8.0, 4.0 * 64.0 / PI);
        let ann = annulus_nodes(&grid, &q, r);
        let base: f64 = ann.iter().map(|&(i, _, c)| grid.weights()[i] * c).sum();
        // f ≡ 1 endpoint is the annulus flux 3πr²
        assert!((base - 3.0 * PI * r * r).abs() < 0.05 * 3.0 * PI * r * r);

        let mu = 4.0 * PI * r * r;
        let prof = solve_transition(r, lambda, mu, &grid, &q).unwrap();
        // independent bisection oracle on the same discrete flux
        let flux = |theta: f64| -> f64 {
            ann.iter()
                .map(|&(i, s, c)| grid.weights()[i] * c * profile_value(r, lambda, theta, s))
                .sum()
        };
        let (mut lo, mut hi) = (1e-6f64, 1e6f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if flux(mid) > mu {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((flux(prof.shape_param) - mu).abs() <= FLUX_TOL * mu);
        assert!((prof.shape_param.ln() - lo.ln()).abs() < 1e-3);
        assert!((prof.achieved_flux - mu).abs() <= FLUX_TOL * mu);
    }

    #[test]
    fn transition_rejects_unreachable_flux() {
        let grid = QuadratureGrid::icosphere(5).unwrap();
        let q = UnitVector::z_axis();
        let r = 0.125;
        assert!(matches!(
            solve_transition(r, 3.0, 2.0 * PI * r * r, &grid, &q),
            Err(Error::FluxUnreachable { .. })
        ));
        assert!(matches!(
            solve_transition(r, 3.0, 10.0 * PI * r * r, &grid, &q),
            Err(Error::FluxUnreachable { .. })
        ));
        let coarse = QuadratureGrid::icosphere(1).unwrap();
        assert!(matches!(
            solve_transition(0.05, 30.0, 4.0 * PI * 0.0025, &coarse, &q),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn round_sphere_density() {
        let grid = Arc::new(QuadratureGrid::icosphere(3).unwrap());
        let f = build_density(grid, &PunctureSet::round_sphere(), 1).unwrap();
        assert!(f.values().iter().all(|v| *v == 1.0));
        assert!(closure_defect(&f).norm() < 1e-9);
    }

    #[test]
    fn antipodal_density() {
        let grid = Arc::new(QuadratureGrid::icosphere(5).unwrap());
        let n = 8;
        let f = build_density(grid.clone(), &antipodal(4.0), n).unwrap();
        let lambda = f.profiles()[0].lambda;
        let cap = SphericalCap::new(UnitVector::z_axis(), 1.0 / 8.0).unwrap();
        let mut disc = 0;
        for (v, region) in f.values().iter().zip(f.regions()) {
            match region {
                NodeRegion::Disc(_) => {
                    assert_eq!(*v, lambda);
                    disc += 1;
                }
                NodeRegion::Annulus(_) => assert!(*v >= 1.0 && *v <= lambda),
                NodeRegion::Sigma => assert!(*v >= 1.0),
            }
        }
        assert!(disc >= 2 * MIN_CAP_NODES);
        let min = f.values().iter().cloned().fold(f64::MAX, f64::min);
        let max = f.values().iter().cloned().fold(0.0, f64::max);
        assert_eq!(min, 1.0);
        assert_eq!(max, lambda);
        let disc_mass: f64 = f
            .target_areas()
            .iter()
            .zip(f.regions())
            .filter(|(_, r)| **r == NodeRegion::Disc(0))
            .map(|(a, _)| a)
            .sum();
        // continuous disc mass a·(n²/π)·Area(B) ≈ a·(1 + 1/(4n²))
        let continuous = 4.0 * 64.0 / PI * cap.area();
        assert!((disc_mass - continuous).abs() < 1e-12 * continuous);
        assert!((continuous / 4.0 - 1.0 - 1.0 / 256.0).abs() < 1e-4);
        assert!(f.curvature().iter().all(|k| *k <= 1.0));

        // independent quadrature of the closure
        let direct = grid
            .nodes()
            .iter()
            .zip(grid.weights())
            .zip(f.values())
            .fold(Vec3::zeros(), |acc, ((u, w), v)| acc + u.as_vec() * (w * v));
        assert!(direct.norm() <= CLOSURE_TOL * f.total_mass());

        // mass: sphere + disc weights + annulus excess below Σ 16π/n²
        let excess = f.total_mass() - 4.0 * PI - 8.0;
        assert!(excess.abs() < 2.0 * 16.0 * PI / 64.0, "{excess}");
    }

    #[test]
    fn one_sided_cap_boost_shows_in_defect() {
        // f boosted to λ on one cap only: defect ≈ (λ - 1)·π r²·q
        let grid = Arc::new(QuadratureGrid::icosphere(5).unwrap());
        let q = uv(0.1, -0.7, 0.5);
        let (r, lambda) = (0.2, 6.0);
        let cap = SphericalCap::new(q, r).unwrap();
        let d = grid
            .integrate_vector(|p| if cap.contains(p) { lambda } else { 1.0 })
            .unwrap();
        let expected = q.as_vec() * ((lambda - 1.0) * PI * r * r);
        assert!((d - expected).norm() < 0.02 * expected.norm(), "{d:?} vs {expected:?}");
    }

    #[test]
    fn closure_correction_is_one_sided() {
        // three points on a tilted great circle, unevenly spaced
        let tilt = 0.3f64;
        let pts: Vec<UnitVector> = [0.0f64, 1.75, 4.0]
            .iter()
            .map(|t| uv(t.cos(), t.sin() * tilt.cos(), t.sin() * tilt.sin()))
            .collect();
        let set = PunctureSet::from_points(pts).unwrap();
        let grid = Arc::new(QuadratureGrid::icosphere(5).unwrap());
        let f = build_density(grid, &set, 12).unwrap();
        assert!(f.raw_defect().norm() > 1e-6);
        assert!(closure_defect(&f).norm() <= CLOSURE_TOL * f.total_mass());
        let min = f.values().iter().cloned().fold(f64::MAX, f64::min);
        assert_eq!(min, 1.0);
    }

    #[test]
    fn under_resolved_caps_rejected() {
        let grid = Arc::new(QuadratureGrid::icosphere(2).unwrap());
        assert!(matches!(
            build_density(grid, &antipodal(4.0), 8),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn n_below_minimum_rejected() {
        let grid = Arc::new(QuadratureGrid::icosphere(3).unwrap());
        assert!(matches!(
            build_density(grid, &antipodal(4.0), 2),
            Err(Error::InvalidInput(_))
        ));
    }
}
