use std::sync::Arc;

use lasalle_core::cellset::{
    invariant_part, is_positively_invariant, omega_of_set, outer_image, NestedImages, OmegaMode,
};
use lasalle_core::{Bounds, CellSet, GridSpec, ImageConfig, Padding, SystemSpec};
use proptest::prelude::*;

fn grid(n: usize, half: f64) -> Arc<GridSpec> {
    Arc::new(GridSpec::uniform(Bounds::cube(2, -half, half).unwrap(), n).unwrap())
}

fn rotation(rho: f64, theta: f64) -> SystemSpec {
    SystemSpec::parse(
        &["p*x1 - q*x2", "q*x1 + p*x2"],
        &[("p", rho * theta.cos()), ("q", rho * theta.sin())],
    )
    .unwrap()
}

fn nonlinear(a: f64, b: f64) -> SystemSpec {
    SystemSpec::parse(&["a*x2 + 0.2*sin(x1)", "b*x1 - 0.3*x2*x1"], &[("a", a), ("b", b)]).unwrap()
}

fn padding() -> impl Strategy<Value = Padding> {
    prop_oneof![Just(Padding::None), Just(Padding::Cells(1)), Just(Padding::Lipschitz(1.5))]
}

fn cells(n: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..n * n, 1..n * n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn boundary_and_interior_partition_the_set(picked in cells(10)) {
        let s = CellSet::from_linear(grid(10, 1.0), picked).unwrap();
        let b = s.boundary();
        let i = s.interior();
        prop_assert_eq!(b.union(&i), s.clone());
        prop_assert!(b.intersection(&i).is_empty());
        prop_assert_eq!(s.closure(), s);
    }

    #[test]
    fn denser_samples_only_add_raw_hits(
        a in -0.95f64..0.95, b in -0.95f64..0.95, k in 1usize..5, picked in cells(12),
    ) {
        let sys = nonlinear(a, b);
        let s = CellSet::from_linear(grid(12, 1.5), picked).unwrap();
        let coarse = outer_image(&sys, &s, &ImageConfig::unpadded(k)).unwrap();
        let fine = outer_image(&sys, &s, &ImageConfig::unpadded(2 * k)).unwrap();
        prop_assert!(coarse.raw.is_subset(&fine.raw));
    }

    #[test]
    fn nested_images_decrease(
        rho in 0.2f64..0.7, theta in 0.0f64..std::f64::consts::TAU, pad in padding(), k in 1usize..5,
    ) {
        let sys = rotation(rho, theta);
        let h = CellSet::full(grid(16, 2.0));
        let cfg = ImageConfig { samples_per_axis: k, padding: pad };
        prop_assert!(is_positively_invariant(&sys, &h, &cfg).unwrap());
        let mut prev = h.clone();
        for next in NestedImages::new(&sys, &h, &cfg).unwrap().take(40) {
            prop_assert!(next.is_subset(&prev));
            prev = next;
        }
    }

    #[test]
    fn invariant_part_is_a_fixed_point_of_the_pruning(
        rho in 0.5f64..1.3, theta in 0.0f64..std::f64::consts::TAU, pad in padding(), picked in cells(12),
    ) {
        let sys = rotation(rho, theta);
        let e = CellSet::from_linear(grid(12, 2.0), picked).unwrap();
        let cfg = ImageConfig { samples_per_axis: 2, padding: pad };
        let m = invariant_part(&sys, &e, &cfg, None).unwrap();
        prop_assert!(m.converged);
        prop_assert!(m.cells.is_subset(&e));
        if m.cells.is_empty() {
            return Ok(());
        }
        let image_of_m = outer_image(&sys, &m.cells, &cfg).unwrap().cells;
        for c in m.cells.iter() {
            let single = CellSet::from_linear(e.grid().clone(), [c]).unwrap();
            let img = outer_image(&sys, &single, &cfg).unwrap().cells;
            prop_assert!(!img.intersection(&m.cells).is_empty(), "cell {} has no successor", c);
            prop_assert!(image_of_m.contains(c), "cell {} has no predecessor", c);
        }
    }

    #[test]
    fn invariant_part_lies_in_the_limit_set(
        rho in 0.2f64..0.7, theta in 0.0f64..std::f64::consts::TAU, pad in padding(), k in 1usize..4,
    ) {
        let sys = rotation(rho, theta);
        let e = CellSet::full(grid(16, 2.0));
        let cfg = ImageConfig { samples_per_axis: k, padding: pad };
        prop_assume!(is_positively_invariant(&sys, &e, &cfg).unwrap());
        let omega = omega_of_set(&sys, &e, &cfg, 10, 50).unwrap();
        prop_assert_eq!(omega.mode, OmegaMode::Nested);
        let m = invariant_part(&sys, &e, &cfg, None).unwrap();
        prop_assert!(m.cells.is_subset(&omega.cells));
    }

    #[test]
    fn nonlinear_invariant_part_lies_in_the_limit_set(
        a in -0.6f64..0.6, b in -0.6f64..0.6, pad in padding(),
    ) {
        let sys = nonlinear(a, b);
        let e = CellSet::full(grid(16, 2.0));
        let cfg = ImageConfig { samples_per_axis: 2, padding: pad };
        prop_assume!(is_positively_invariant(&sys, &e, &cfg).unwrap());
        let omega = omega_of_set(&sys, &e, &cfg, 10, 50).unwrap();
        let m = invariant_part(&sys, &e, &cfg, None).unwrap();
        prop_assert!(m.cells.is_subset(&omega.cells));
    }
}
