use std::sync::Arc;

use lasalle_core::cellset::{omega_of_set, CellSet};
use lasalle_core::dynsys::SetDistance;
use lasalle_core::limitset::{omega_of_point, LimitSetOptions};
use lasalle_core::{Bounds, GridSpec, ImageConfig, Point, SystemSpec};
use proptest::prelude::*;

fn rotation(rho: f64, theta: f64) -> SystemSpec {
    SystemSpec::parse(
        &["p*x1 - q*x2", "q*x1 + p*x2"],
        &[("p", rho * theta.cos()), ("q", rho * theta.sin())],
    )
    .unwrap()
}

fn logistic(r: f64) -> SystemSpec {
    SystemSpec::parse(&["r*x1*(1 - x1)"], &[("r", r)]).unwrap()
}

fn opts(n_total: usize) -> LimitSetOptions {
    LimitSetOptions {
        n_total,
        ..LimitSetOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bounded_motions_have_nonempty_estimates(r in 2.5f64..4.0, x0 in 0.01f64..0.99) {
        let est = omega_of_point(&logistic(r), &Point::from(x0), &opts(2000)).unwrap();
        prop_assert!(!est.representatives.is_empty());
    }

    #[test]
    fn estimates_are_positively_invariant(
        r in prop_oneof![2.6f64..2.9, 3.1f64..3.4], x0 in 0.05f64..0.95,
    ) {
        let sys = logistic(r);
        let tol = 1e-6;
        let est = omega_of_point(&sys, &Point::from(x0), &opts(10_000)).unwrap();
        for rep in &est.representatives {
            let img = sys.step(rep).unwrap();
            let d = est.representatives.distance_from(img.coords()).unwrap();
            prop_assert!(d <= est.tail_radius + tol, "image of {:?} is {} away", rep, d);
        }
    }

    #[test]
    fn planar_estimates_are_positively_invariant(
        rho in 0.3f64..0.9, theta in 0.0f64..std::f64::consts::TAU, x0 in prop::array::uniform2(-1.0f64..1.0),
    ) {
        let sys = rotation(rho, theta);
        let est = omega_of_point(&sys, &Point::new(x0.to_vec()), &opts(4000)).unwrap();
        for rep in &est.representatives {
            let img = sys.step(rep).unwrap();
            let d = est.representatives.distance_from(img.coords()).unwrap();
            prop_assert!(d <= est.tail_radius + 1e-6);
        }
    }

    #[test]
    fn point_limit_sets_lie_in_the_set_limit_set(
        r in 3.1f64..3.4, x0 in 0.05f64..0.95,
    ) {
        let sys = logistic(r);
        let grid = Arc::new(GridSpec::uniform(Bounds::interval(0.0, 1.0).unwrap(), 128).unwrap());
        let h = CellSet::full(grid);
        let omega = omega_of_set(&sys, &h, &ImageConfig::default(), 10, 60).unwrap();
        let est = omega_of_point(&sys, &Point::from(x0), &opts(10_000)).unwrap();
        for rep in &est.representatives {
            prop_assert!(omega.cells.covers(rep.coords()), "{:?} outside Ω(H)", rep);
        }
    }

    #[test]
    fn planar_point_limit_sets_lie_in_the_set_limit_set(
        rho in 0.3f64..0.7, theta in 0.0f64..std::f64::consts::TAU, x0 in prop::array::uniform2(-1.0f64..1.0),
    ) {
        let sys = rotation(rho, theta);
        let grid = Arc::new(GridSpec::uniform(Bounds::cube(2, -2.0, 2.0).unwrap(), 32).unwrap());
        let h = CellSet::full(grid);
        let omega = omega_of_set(&sys, &h, &ImageConfig::default(), 10, 60).unwrap();
        let est = omega_of_point(&sys, &Point::new(x0.to_vec()), &opts(2000)).unwrap();
        for rep in &est.representatives {
            prop_assert!(omega.cells.covers(rep.coords()));
        }
    }

    #[test]
    fn longer_motions_do_not_widen_the_tail(
        r in prop_oneof![2.6f64..2.9, 3.1f64..3.4], x0 in 0.05f64..0.95, n in 2000usize..6000,
    ) {
        let sys = logistic(r);
        let short = omega_of_point(&sys, &Point::from(x0), &opts(n)).unwrap();
        let long = omega_of_point(&sys, &Point::from(x0), &opts(2 * n)).unwrap();
        prop_assert!(long.tail_radius <= short.tail_radius + LimitSetOptions::default().cluster_tol);
    }
}
