use std::sync::{Arc, OnceLock};

use ksurf::pipeline::*;
use ksurf::polytope::SupportFunction;
use ksurf::profile::{NodeRegion, PunctureSet};
use ksurf::solver::SolveOptions;
use ksurf::sphere::{QuadratureGrid, UnitVector};

fn antipodal() -> PunctureSet {
    PunctureSet::new(
        vec![UnitVector::z_axis(), UnitVector::z_axis().negated()],
        vec![4.0, 4.0],
    )
    .unwrap()
}

fn body() -> &'static SurfaceDecomposition {
    static BODY: OnceLock<SurfaceDecomposition> = OnceLock::new();
    BODY.get_or_init(|| construct_at_level(&antipodal(), 4, 4, &SolveOptions::default()).unwrap())
}

#[test]
fn areas_partition() {
    let d = body();
    let parts = d.k_region_area() + (0..2).map(|j| d.annulus_area(j) + d.disc_area(j)).sum::<f64>();
    assert!((parts - d.total_area()).abs() <= 1e-12 * d.total_area());
    let (k, a, disc) = d.label_counts();
    assert_eq!(k + a + disc, d.grid().len());
    assert!(a > 0 && disc > 0);
}

#[test]
fn reflection_symmetry() {
    let d = body();
    let (a, b) = (d.disc_area(0), d.disc_area(1));
    assert!((a - b).abs() <= 1e-6 * a, "{a} vs {b}");
    assert!(equilibrium_relative(d) <= 1e-6);
}

#[test]
fn rotational_symmetry() {
    let d = construct_at_level(&antipodal(), 4, 5, &SolveOptions::default()).unwrap();
    let (centered, _) = d.body.recenter();
    let sample = QuadratureGrid::icosphere(3).unwrap();
    let defect = rotational_symmetry_defect(&centered, &UnitVector::z_axis(), &[0.3, 1.1, 2.5], &sample);
    assert!(defect <= 1e-3 * centered.diameter(), "{defect} vs {}", centered.diameter());
}

#[test]
fn recovered_points_touch_support() {
    let d = body();
    let step = 2.0 * d.grid().mean_spacing();
    for u in d.k_region_probes(10, step, 7) {
        let x = recover_points(&d.support, &d.body, &u, step).unwrap();
        let h = d.body.support(u.as_vec());
        assert!((x.dot(u.as_vec()) - h).abs() <= 1e-2 * h, "{} vs {h}", x.dot(u.as_vec()));
    }
}

#[test]
fn probe_preconditions() {
    let d = body();
    let s = d.grid().mean_spacing();
    assert!(d.probe(&UnitVector::x_axis(), 0.5 * s).is_err());
    assert!(d.probe(&UnitVector::x_axis(), 6.0 * s).is_err());
    assert!(d.probe(&UnitVector::z_axis(), 2.0 * s).is_err());
    assert!(d.probe(&UnitVector::x_axis(), 2.0 * s).is_ok());
}

#[test]
fn disc_regions_are_planar() {
    let d = body();
    for j in 0..2 {
        let m = disc_metrics(d, j).unwrap();
        assert!(m.normal_angle <= 1e-6);
        assert!(m.plane_rms <= 0.02 * d.body.diameter(), "{}", m.plane_rms);
        assert!(m.boundary_vertices >= 3);
    }
    assert!(disc_metrics(d, 2).is_err());
}

#[test]
fn k_region_is_smooth_enough() {
    let d = body();
    assert!(gauss_coverage(d) >= 0.999);
    let sigma = d
        .region_of_facet
        .iter()
        .filter(|r| **r == NodeRegion::Sigma)
        .count();
    assert!(sigma > d.grid().len() / 2);
}

#[test]
fn small_sweep() {
    let mut config = ConstructionConfig::new(antipodal(), vec![3, 4], 4).unwrap();
    config.probes = 5;
    config.probe_step_factor = 2.0;
    let (report, bodies) = run_sweep(&config).unwrap();
    assert!(report.failures.is_empty());
    assert_eq!(bodies.len(), 2);
    assert!(report.all_passed(), "{:?}", report.assertions);
    assert!(report.records[0].hausdorff_prev.is_none());
    assert!(report.records[1].hausdorff_prev.unwrap() > 0.0);
    let rhs = 4.0 * std::f64::consts::PI + 2.0 * 8.0 * std::f64::consts::PI / 9.0 + 8.0;
    assert_eq!(report.records[0].area_bound, rhs);
    let json = serde_json::to_string(&report).unwrap();
    let back: ConvergenceReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
}

#[test]
fn resolution_failure_recorded() {
    let mut config = ConstructionConfig::new(antipodal(), vec![3, 40], 3).unwrap();
    config.probes = 0;
    let (report, bodies) = run_sweep(&config).unwrap();
    assert_eq!(bodies.len(), 1);
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].n, 40);
    assert!(!report.all_passed());
}

#[test]
fn round_sphere_body_is_unit() {
    let grid = Arc::new(QuadratureGrid::icosphere(3).unwrap());
    let d = construct(&PunctureSet::round_sphere(), 1, grid, &SolveOptions::default()).unwrap();
    let dev = d.support.values().iter().map(|h| (h - 1.0).abs()).fold(0.0, f64::max);
    assert!(dev <= 0.01);
}
