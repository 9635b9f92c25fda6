use std::sync::Arc;

use ksurf::export::Mesh;
use ksurf::pipeline::{convexity_defect, hessian_probe, parallel_mean_curvature};
use ksurf::polytope::{hausdorff_distance, realize, Ball, SupportVector};
use ksurf::profile::{find_equilibrium_weights, NodeRegion, PunctureSet};
use ksurf::sphere::{QuadratureGrid, UnitVector, Vec3};
use proptest::prelude::*;

fn grid42() -> Arc<QuadratureGrid> {
    Arc::new(QuadratureGrid::icosphere_vertices(1).unwrap())
}

fn support(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1.0f64..1.5, len)
}

fn direction() -> impl Strategy<Value = UnitVector> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("nonzero", |(x, y, z)| x * x + y * y + z * z > 0.01)
        .prop_map(|(x, y, z)| UnitVector::new(x, y, z).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn volume_gradient_is_area(h in support(42), i in 0usize..42) {
        let grid = grid42();
        let body = realize(&SupportVector::new(grid.clone(), h.clone()).unwrap()).unwrap();
        let area = body.facets()[i].area;
        prop_assume!(area > 1e-6 * body.total_area());
        let eps = 1e-5;
        let vol = |d: f64| {
            let mut g = h.clone();
            g[i] += d;
            realize(&SupportVector::new(grid.clone(), g).unwrap()).unwrap().volume()
        };
        let fd = (vol(eps) - vol(-eps)) / (2.0 * eps);
        prop_assert!((fd - area).abs() <= 1e-5 * area, "{} vs {}", fd, area);
    }

    #[test]
    fn areas_close_up(h in support(42)) {
        let body = realize(&SupportVector::new(grid42(), h).unwrap()).unwrap();
        prop_assert!(body.normal_balance().norm() <= 1e-12 * body.total_area());
    }

    #[test]
    fn scaling(h in support(42), t in 0.2f64..5.0) {
        let grid = grid42();
        let a = realize(&SupportVector::new(grid.clone(), h.clone()).unwrap()).unwrap();
        let b = realize(&SupportVector::new(grid, h.iter().map(|x| x * t).collect()).unwrap()).unwrap();
        prop_assert!((b.total_area() - t * t * a.total_area()).abs() <= 1e-10 * b.total_area());
        prop_assert!((b.volume() - t.powi(3) * a.volume()).abs() <= 1e-10 * b.volume());
    }

    #[test]
    fn translation(h in support(42), c in (-0.5f64..0.5, -0.5f64..0.5, -0.5f64..0.5)) {
        let c = Vec3::new(c.0, c.1, c.2);
        let sv = SupportVector::new(grid42(), h).unwrap();
        let a = realize(&sv).unwrap();
        let b = realize(&sv.translated(&c)).unwrap();
        prop_assert!((a.volume() - b.volume()).abs() <= 1e-10 * a.volume());
        for (fa, fb) in a.facets().iter().zip(b.facets()) {
            prop_assert!((fa.area - fb.area).abs() <= 1e-9 * a.total_area());
        }
        let back = b.translated(&-c);
        prop_assert!(hausdorff_distance(&a, &back, &grid42()) <= 1e-10);
    }

    #[test]
    fn obj_round_trip(h in support(42)) {
        let body = realize(&SupportVector::new(grid42(), h).unwrap()).unwrap();
        let mesh = Mesh::from_polytope(&body);
        let back = Mesh::from_obj(&mesh.to_obj()).unwrap();
        prop_assert_eq!(&back.vertices, &mesh.vertices);
        prop_assert!((back.volume() - body.volume()).abs() <= 1e-12 * body.volume());
    }

    #[test]
    fn regions_partition_area(h in support(162), p in direction(), q in direction(), n in 3u32..6) {
        prop_assume!(p.dot(&q) > -0.5);
        let grid = Arc::new(QuadratureGrid::icosphere_vertices(2).unwrap());
        let points = vec![p, q, UnitVector::from_vec(-(p.as_vec() + q.as_vec())).unwrap()];
        let set = PunctureSet::from_points(points).unwrap();
        let body = realize(&SupportVector::new(grid.clone(), h).unwrap()).unwrap();
        let mut by_region = [0.0f64; 3];
        for (u, f) in grid.nodes().iter().zip(body.facets()) {
            let k = match set.classify(u, n) {
                NodeRegion::Sigma => 0,
                NodeRegion::Annulus(_) => 1,
                NodeRegion::Disc(_) => 2,
            };
            by_region[k] += f.area;
        }
        let sum: f64 = by_region.iter().sum();
        prop_assert!((sum - body.total_area()).abs() <= 1e-12 * sum);
    }

    #[test]
    fn ball_probe_det(r in 0.3f64..3.0, c in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), at in direction()) {
        let ball = Ball { center: Vec3::new(c.0, c.1, c.2), radius: r };
        let step = 0.05;
        let p = hessian_probe(&ball, &at, step);
        // the linear part cancels only up to the O(step²) stencil error
        let slack = r * ball.center.norm() * step * step + 1e-9;
        prop_assert!((p.det - r * r).abs() <= slack, "{} vs {}", p.det, r * r);
    }

    #[test]
    fn parallel_identity(rho in 0.01f64..100.0) {
        prop_assert!((parallel_mean_curvature(rho, 1.0 / rho) - 0.5).abs() <= 1e-15);
    }

    #[test]
    fn regular_polygon_is_convex(k in 3usize..40, phase in 0.0f64..std::f64::consts::TAU, r in 0.1f64..10.0) {
        let pts: Vec<[f64; 2]> = (0..k)
            .map(|i| {
                let t = phase + i as f64 * std::f64::consts::TAU / k as f64;
                [r * t.cos(), r * t.sin()]
            })
            .collect();
        prop_assert!(convexity_defect(&pts) <= 1e-12);
    }

    #[test]
    fn equilibrium_weights_balance(dirs in prop::collection::vec(direction(), 2..7)) {
        let mut points = dirs.clone();
        points.extend(dirs.iter().map(|d| d.negated()));
        if let Ok(w) = find_equilibrium_weights(&points) {
            let s: Vec3 = points.iter().zip(&w).map(|(p, a)| p.as_vec() * *a).sum();
            prop_assert!(s.norm() <= 1e-9 * w.iter().sum::<f64>());
            let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!((min - 1.0).abs() <= 1e-12);
        }
    }
}
