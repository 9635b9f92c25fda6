//! Discrete Minkowski problem: support numbers `h` whose polytope has facet
//! areas `F_i` on the normals `u_i`.
//!
//! The solution minimizes `Σ F_i h_i` among bodies of a fixed volume. The
//! iteration works on the scale-free merit `M(h) = Σ F_i h_i · (V₀/V(h))^{1/3}`,
//! which is that constrained objective evaluated after projecting `h` onto the
//! volume level set, always on the recentered body. Search directions are
//! Newton steps for `J(h) = Σ F_i h_i - log V(h)`, whose minimizers are the
//! solutions up to scale; its Hessian is assembled from the facet adjacency
//! of the current polytope and inverted by conjugate gradients.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::{hausdorff_distance, realize, ConvexPolytope, SupportFunction, SupportVector};
use crate::profile::DensityField;
use crate::sphere::{probe_directions, QuadratureGrid, UnitVector, Vec3};

/// Closure tolerance relative to `Σ F_i`.
pub const CLOSURE_TOL: f64 = 1e-8;
/// Denominator floor of the relative residual, relative to `Σ F_i`.
pub const RESIDUAL_FLOOR: f64 = 1e-12;
/// Largest per-iteration change of any `h_i`, relative to the diameter.
pub const MAX_STEP_FRACTION: f64 = 0.1;
/// Backtracking gives up below this step length.
pub const MIN_STEP: f64 = 1e-14;
const ARMIJO: f64 = 1e-4;
/// Normalization `Σ F_i h_i = 3` of the working iterate.
const WORK_SCALE: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct MinkowskiProblem {
    grid: Arc<QuadratureGrid>,
    targets: Vec<f64>,
}

impl MinkowskiProblem {
    pub fn new(grid: Arc<QuadratureGrid>, targets: Vec<f64>) -> Result<Self> {
        if targets.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} targets for {} normals",
                targets.len(),
                grid.len()
            )));
        }
        if let Some(i) = targets.iter().position(|f| !(*f > 0.0 && f.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "target area {} at node {i} is not positive",
                targets[i]
            )));
        }
        let problem = MinkowskiProblem { grid, targets };
        let total = problem.total_target();
        let defect = problem.closure_defect().norm();
        let bound = CLOSURE_TOL * total;
        if defect > bound {
            return Err(Error::ClosureViolated { defect, bound });
        }
        for w in probe_directions() {
            let mass: f64 = problem
                .grid
                .nodes()
                .iter()
                .zip(&problem.targets)
                .filter(|(u, _)| u.dot(&w) > 0.0)
                .map(|(_, f)| f)
                .sum();
            if !(mass > 0.0) {
                let v = w.as_vec();
                return Err(Error::HemisphereViolated {
                    direction: [v.x, v.y, v.z],
                });
            }
        }
        Ok(problem)
    }

    /// Targets `F_i = w_i`: the unit sphere.
    pub fn round_sphere(grid: Arc<QuadratureGrid>) -> Result<Self> {
        let targets = grid.weights().to_vec();
        Self::new(grid, targets)
    }

    /// Targets `F_i = f(u_i) w_i`.
    pub fn from_density(field: &DensityField) -> Result<Self> {
        Self::new(field.grid().clone(), field.target_areas())
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn total_target(&self) -> f64 {
        self.targets.iter().sum()
    }

    /// `Σ F_i u_i`.
    pub fn closure_defect(&self) -> Vec3 {
        self.grid
            .nodes()
            .iter()
            .zip(&self.targets)
            .fold(Vec3::zeros(), |acc, (u, f)| acc + u.as_vec() * *f)
    }

    /// Volume of the sphere with the same total area.
    pub fn reference_volume(&self) -> f64 {
        (self.total_target() / (4.0 * PI)).powf(1.5) * 4.0 * PI / 3.0
    }

    /// `max_i |A_i - F_i| / max(F_i, floor)`.
    pub fn relative_residual(&self, areas: &[f64]) -> f64 {
        let floor = RESIDUAL_FLOOR * self.total_target();
        areas
            .iter()
            .zip(&self.targets)
            .map(|(a, f)| (a - f).abs() / f.max(floor))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol_rel: f64,
    pub max_iters: usize,
    pub line_search_shrink: f64,
    pub initial: Option<SupportVector>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol_rel: 1e-6,
            max_iters: 2000,
            line_search_shrink: 0.5,
            initial: None,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_rel > 0.0) {
            return Err(Error::InvalidInput(format!("tol_rel {} must be positive", self.tol_rel)));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) {
            return Err(Error::InvalidInput(format!(
                "line_search_shrink {} outside (0, 1)",
                self.line_search_shrink
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Residual of the returned support numbers, from a fresh realization.
    pub final_residual: f64,
    /// Residual after the area-matching rescale, per iteration.
    pub residual_history: Vec<f64>,
    /// `log M` per accepted iterate.
    pub merit_history: Vec<f64>,
    pub wall_time: f64,
    /// Translation that moved the starting body's centroid to the origin.
    pub normalization: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub support: SupportVector,
    pub body: ConvexPolytope,
    pub report: SolveReport,
}

/// Target areas with the derived quantities the iteration needs.
struct Targets {
    f: Vec<f64>,
    total: f64,
    log_v0: f64,
    floor: f64,
}

impl Targets {
    fn new(f: Vec<f64>) -> Self {
        let total: f64 = f.iter().sum();
        let v0 = (total / (4.0 * PI)).powf(1.5) * 4.0 * PI / 3.0;
        Targets {
            f,
            total,
            log_v0: v0.ln(),
            floor: RESIDUAL_FLOOR * total,
        }
    }

    /// Residual of `areas` after the rescale that matches total area.
    fn scaled_residual(&self, areas: &[f64]) -> f64 {
        let s2 = self.total / areas.iter().sum::<f64>();
        areas
            .iter()
            .zip(&self.f)
            .map(|(a, f)| (a * s2 - f).abs() / f.max(self.floor))
            .fold(0.0, f64::max)
    }
}

/// Working iterate: recentered, scaled to `Σ F h = 3`, with empty facets'
/// planes lowered onto the body.
#[derive(Clone)]
struct Iterate {
    h: Vec<f64>,
    body: ConvexPolytope,
    volume: f64,
    log_merit: f64,
    residual: f64,
}

impl Iterate {
    fn new(targets: &Targets, grid: &QuadratureGrid, mut h: Vec<f64>, body: ConvexPolytope) -> Result<Self> {
        let volume = body.volume();
        if !(volume > 0.0) {
            return Err(Error::EmptyBody);
        }
        let c = body.centroid();
        let body = body.translated(&-c);
        for ((hi, u), facet) in h.iter_mut().zip(grid.nodes()).zip(body.facets()) {
            *hi -= u.as_vec().dot(&c);
            if facet.is_empty() {
                *hi = hi.min(body.support(u.as_vec()));
            }
        }
        let sum_fh: f64 = h.iter().zip(&targets.f).map(|(h, f)| h * f).sum();
        let t = WORK_SCALE / sum_fh;
        h.iter_mut().for_each(|v| *v *= t);
        let body = body.scaled(t);
        let volume = volume * t * t * t;
        let mut it = Iterate {
            h,
            body,
            volume,
            log_merit: 0.0,
            residual: 0.0,
        };
        it.evaluate(targets);
        Ok(it)
    }

    fn evaluate(&mut self, targets: &Targets) {
        let sum_fh: f64 = self.h.iter().zip(&targets.f).map(|(h, f)| h * f).sum();
        self.log_merit = sum_fh.ln() + (targets.log_v0 - self.volume.ln()) / 3.0;
        self.residual = targets.scaled_residual(&self.body.facet_areas());
    }
}

/// `H = L/V + A Aᵀ/V² + R` with `L = -∂A/∂h`; `R` is a diagonal stand-in
/// for facets that are currently empty.
struct Hessian {
    offdiag: Vec<(usize, usize, f64)>,
    diag: Vec<f64>,
    precond: Vec<f64>,
    areas: Vec<f64>,
    volume: f64,
}

impl Hessian {
    fn assemble(grid: &QuadratureGrid, it: &Iterate) -> Self {
        let nodes = grid.nodes();
        let n = nodes.len();
        let v = it.volume;
        let areas = it.body.facet_areas();
        let mut diag = vec![0.0; n];
        let mut offdiag = Vec::with_capacity(it.body.edges().len());
        for e in it.body.edges() {
            let (i, j) = e.facets;
            let (ui, uj) = (nodes[i].as_vec(), nodes[j].as_vec());
            let sin = ui.cross(uj).norm();
            if sin <= 1e-15 {
                continue;
            }
            let cos = ui.dot(uj);
            offdiag.push((i, j, -e.length / sin / v));
            diag[i] += e.length * cos / sin / v;
            diag[j] += e.length * cos / sin / v;
        }
        let mut active: Vec<f64> = diag
            .iter()
            .zip(&areas)
            .filter(|(d, a)| **a > 0.0 && **d > 0.0)
            .map(|(d, _)| *d)
            .collect();
        let typical = if active.is_empty() {
            1.0
        } else {
            let mid = active.len() / 2;
            *active.select_nth_unstable_by(mid, f64::total_cmp).1
        };
        for (d, a) in diag.iter_mut().zip(&areas) {
            if *a <= 0.0 || *d <= 0.0 {
                *d = typical;
            }
        }
        let precond = diag.iter().zip(&areas).map(|(d, a)| d + a * a / (v * v)).collect();
        Hessian {
            offdiag,
            diag,
            precond,
            areas,
            volume: v,
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, x)| d * x).collect();
        for &(i, j, c) in &self.offdiag {
            y[i] += c * x[j];
            y[j] += c * x[i];
        }
        let ax: f64 = self.areas.iter().zip(x).map(|(a, x)| a * x).sum();
        let k = ax / (self.volume * self.volume);
        for (yi, a) in y.iter_mut().zip(&self.areas) {
            *yi += a * k;
        }
        y
    }
}

/// Removes the translation directions `(<u_i, e_k>)_i`.
struct TranslationProjector<'a> {
    nodes: &'a [UnitVector],
    gram_inv: Matrix3<f64>,
}

impl<'a> TranslationProjector<'a> {
    fn new(grid: &'a QuadratureGrid) -> Self {
        let gram = grid
            .nodes()
            .iter()
            .fold(Matrix3::zeros(), |acc, u| acc + u.as_vec() * u.as_vec().transpose());
        let gram_inv = gram.try_inverse().unwrap_or_else(Matrix3::zeros);
        TranslationProjector {
            nodes: grid.nodes(),
            gram_inv,
        }
    }

    fn apply(&self, x: &mut [f64]) {
        let t = self
            .nodes
            .iter()
            .zip(x.iter())
            .fold(Vec3::zeros(), |acc, (u, x)| acc + u.as_vec() * *x);
        let c = self.gram_inv * t;
        for (xi, u) in x.iter_mut().zip(self.nodes) {
            *xi -= u.as_vec().dot(&c);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projected, Jacobi-preconditioned conjugate gradients for `H x = b`.
fn conjugate_gradient(
    hess: &Hessian,
    proj: &TranslationProjector<'_>,
    b: &[f64],
    rel_tol: f64,
    max_iters: usize,
) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    proj.apply(&mut r);
    let b_norm = dot(&r, &r).sqrt();
    if b_norm == 0.0 {
        return x;
    }
    let precondition = |r: &[f64]| {
        let mut z: Vec<f64> = r.iter().zip(&hess.precond).map(|(r, d)| r / d).collect();
        proj.apply(&mut z);
        z
    };
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iters {
        let mut hp = hess.apply(&p);
        proj.apply(&mut hp);
        let php = dot(&p, &hp);
        if !(php > 0.0) {
            break;
        }
        let alpha = rz / php;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * hp[k];
        }
        if dot(&r, &r).sqrt() <= rel_tol * b_norm {
            break;
        }
        z = precondition(&r);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    x
}

/// One damped Newton step with backtracking on `log M`; `None` when the
/// step length falls below [`MIN_STEP`].
fn newton_step(
    targets: &Targets,
    grid: &Arc<QuadratureGrid>,
    proj: &TranslationProjector<'_>,
    it: &Iterate,
    shrink: f64,
) -> Option<Iterate> {
    let n = grid.len();
    let areas = it.body.facet_areas();
    let grad: Vec<f64> = targets
        .f
        .iter()
        .zip(&areas)
        .map(|(f, a)| f - a / it.volume)
        .collect();
    let hess = Hessian::assemble(grid, it);
    let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
    let forcing = it.residual.clamp(1e-10, 0.1);
    let mut dir = conjugate_gradient(&hess, proj, &neg, forcing, 4 * n.max(50));
    let mut slope = dot(&grad, &dir) / WORK_SCALE;
    if !(slope < 0.0) {
        dir = neg.iter().zip(&hess.precond).map(|(g, d)| g / d).collect();
        proj.apply(&mut dir);
        slope = dot(&grad, &dir) / WORK_SCALE;
    }

    let largest = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let cap = MAX_STEP_FRACTION * it.body.diameter();
    let mut alpha = if largest > cap { cap / largest } else { 1.0 };
    let negligible = 1e-12 * it.log_merit.abs().max(1.0);
    while alpha >= MIN_STEP {
        let trial: Vec<f64> = it.h.iter().zip(&dir).map(|(h, d)| h + alpha * d).collect();
        let candidate = SupportVector::new(grid.clone(), trial.clone())
            .and_then(|sv| realize(&sv))
            .and_then(|body| Iterate::new(targets, grid, trial, body));
        if let Ok(next) = candidate {
            let armijo = next.log_merit <= it.log_merit + ARMIJO * alpha * slope;
            let flat = (alpha * slope).abs() <= negligible
                && next.log_merit <= it.log_merit + negligible
                && next.residual < it.residual;
            if armijo || flat {
                debug_assert!(next.log_merit <= it.log_merit + negligible);
                return Some(next);
            }
        }
        alpha *= shrink;
    }
    None
}

/// Residual above which the solve starts with a homotopy in the targets.
const HOMOTOPY_THRESHOLD: f64 = 0.5;
/// Stage residual accepted before the homotopy parameter advances.
const HOMOTOPY_STAGE_TOL: f64 = 0.02;
const HOMOTOPY_STAGE_ITERS: usize = 8;
const HOMOTOPY_MIN_STEP: f64 = 1e-3;

/// Warm start: follows the solutions for `(1 - t)·A⁰ + t·F`, where `A⁰`
/// are the (rescaled) areas of the starting body, from `t = 0` to `t = 1`.
/// Returns the iterate and the Newton steps spent.
fn homotopy(
    targets: &Targets,
    grid: &Arc<QuadratureGrid>,
    proj: &TranslationProjector<'_>,
    start: Iterate,
    options: &SolveOptions,
) -> (Iterate, usize) {
    let areas = start.body.facet_areas();
    let scale = targets.total / areas.iter().sum::<f64>();
    let base: Vec<f64> = areas.iter().map(|a| a * scale).collect();
    let mut it = start;
    let mut steps = 0;
    let (mut t, mut dt) = (0.0f64, 0.25f64);
    while t < 1.0 && steps < options.max_iters {
        let t_try = (t + dt).min(1.0);
        let stage = Targets::new(
            base.iter()
                .zip(&targets.f)
                .map(|(b, f)| (1.0 - t_try) * b + t_try * f)
                .collect(),
        );
        let mut cur = it.clone();
        cur.evaluate(&stage);
        let mut ok = cur.residual <= HOMOTOPY_STAGE_TOL;
        for _ in 0..HOMOTOPY_STAGE_ITERS {
            if ok || steps >= options.max_iters {
                break;
            }
            steps += 1;
            match newton_step(&stage, grid, proj, &cur, options.line_search_shrink) {
                Some(next) => cur = next,
                None => break,
            }
            ok = cur.residual <= HOMOTOPY_STAGE_TOL;
        }
        if ok {
            it = cur;
            t = t_try;
            dt = (dt * 1.5).min(1.0);
        } else {
            dt *= 0.5;
            if dt < HOMOTOPY_MIN_STEP {
                break;
            }
        }
    }
    it.evaluate(targets);
    (it, steps)
}

/// Solves the discrete Minkowski problem; the returned body is recentered.
///
/// Starts far from the solution first follow a homotopy from the starting
/// body's own areas to the targets; the final phase is a monotone descent
/// on the merit for the actual targets.
pub fn solve(problem: &MinkowskiProblem, options: &SolveOptions) -> Result<Solution> {
    options.validate()?;
    let start = Instant::now();
    let grid = problem.grid.clone();
    let n = grid.len();
    let targets = Targets::new(problem.targets.clone());

    let init = match &options.initial {
        Some(h) if h.len() != n => {
            return Err(Error::InvalidInput(format!(
                "initial support vector has {} entries for {n} normals",
                h.len()
            )))
        }
        Some(h) => h.values().to_vec(),
        None => vec![(problem.total_target() / (4.0 * PI)).sqrt(); n],
    };
    let body0 = realize(&SupportVector::new(grid.clone(), init.clone())?)?;
    let c0 = body0.centroid();
    let mut it = Iterate::new(&targets, &grid, init, body0)?;
    let proj = TranslationProjector::new(&grid);

    let mut iterations = 0;
    if it.residual > HOMOTOPY_THRESHOLD {
        let (warm, steps) = homotopy(&targets, &grid, &proj, it, options);
        it = warm;
        iterations = steps;
    }

    let mut report = SolveReport {
        iterations,
        final_residual: f64::NAN,
        residual_history: vec![it.residual],
        merit_history: vec![it.log_merit],
        wall_time: 0.0,
        normalization: [-c0.x, -c0.y, -c0.z],
    };

    while it.residual > options.tol_rel {
        if report.iterations >= options.max_iters {
            report.final_residual = it.residual;
            report.wall_time = start.elapsed().as_secs_f64();
            return Err(Error::NonConvergence(Box::new(report)));
        }
        report.iterations += 1;
        match newton_step(&targets, &grid, &proj, &it, options.line_search_shrink) {
            Some(next) => {
                it = next;
                report.residual_history.push(it.residual);
                report.merit_history.push(it.log_merit);
            }
            None => {
                report.final_residual = it.residual;
                report.wall_time = start.elapsed().as_secs_f64();
                return Err(Error::Stalled(Box::new(report)));
            }
        }
    }

    let s = (problem.total_target() / it.body.total_area()).sqrt();
    let h = SupportVector::new(grid.clone(), it.h.iter().map(|v| v * s).collect())?;
    let fresh = realize(&h)?;
    let (body, shift) = fresh.recenter();
    let support = h.translated(&shift);
    report.final_residual = problem.relative_residual(&body.facet_areas());
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(Solution {
        support,
        body,
        report,
    })
}

/// Independent re-check of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub max_relative: f64,
    pub mean_relative: f64,
    /// `Σ A_i u_i` of the achieved areas.
    pub closure_defect: [f64; 3],
    pub total_area: f64,
    /// Index of the worst facet.
    pub worst_node: usize,
}

pub fn verify_solution(h: &SupportVector, problem: &MinkowskiProblem) -> Result<ResidualSummary> {
    if h.len() != problem.targets.len() {
        return Err(Error::InvalidInput("support vector does not match the problem grid".into()));
    }
    let body = realize(h)?;
    let floor = RESIDUAL_FLOOR * problem.total_target();
    let rel: Vec<f64> = body
        .facet_areas()
        .iter()
        .zip(&problem.targets)
        .map(|(a, f)| (a - f).abs() / f.max(floor))
        .collect();
    let (worst_node, max_relative) = rel
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) });
    let closure = body.normal_balance();
    Ok(ResidualSummary {
        max_relative,
        mean_relative: rel.iter().sum::<f64>() / rel.len() as f64,
        closure_defect: [closure.x, closure.y, closure.z],
        total_area: body.total_area(),
        worst_node,
    })
}

/// Solves from several starting points and returns the largest pairwise
/// Hausdorff distance between the recentered results.
///
/// The first start is the area-matched sphere; the others are seeded random
/// ellipsoids with axis ratios up to 2, translated off the origin.
pub fn uniqueness_probe(problem: &MinkowskiProblem, options: &SolveOptions, trials: usize) -> Result<f64> {
    if trials < 2 {
        return Err(Error::InvalidInput("uniqueness_probe needs at least two trials".into()));
    }
    let grid = problem.grid.clone();
    let radius = (problem.total_target() / (4.0 * PI)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b73_7572_66);
    let mut starts = vec![SupportVector::constant(grid.clone(), radius)];
    for _ in 1..trials {
        let axes = nalgebra::Rotation3::from_scaled_axis(Vec3::new(
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
        ));
        let semi = Vec3::new(
            rng.random_range(0.5..1.0),
            rng.random_range(0.5..1.0),
            rng.random_range(1.0..2.0),
        ) * radius;
        let shape = axes.matrix() * Matrix3::from_diagonal(&semi.component_mul(&semi)) * axes.matrix().transpose();
        let shift = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ) * (0.2 * radius);
        let h = SupportVector::from_fn(grid.clone(), |u| {
            let v = u.as_vec();
            v.dot(&(shape * v)).sqrt() + v.dot(&shift)
        })?;
        starts.push(h);
    }
    let bodies: Vec<ConvexPolytope> = starts
        .into_par_iter()
        .map(|h| {
            let opts = SolveOptions {
                initial: Some(h),
                ..options.clone()
            };
            solve(problem, &opts).map(|s| s.body)
        })
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for a in 0..bodies.len() {
        for b in a + 1..bodies.len() {
            worst = worst.max(hausdorff_distance(&bodies[a], &bodies[b], &grid));
        }
    }
    Ok(worst)
}
