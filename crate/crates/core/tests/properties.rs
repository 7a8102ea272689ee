use beltrami_core::builders::{rng, smooth_bump};
use beltrami_core::commutators::commutator_apply;
use beltrami_core::io::{read_field, write_field, Precision};
use beltrami_core::solver::{beltrami_residual, neumann_solve, NeumannIteration, SolveOptions};
use beltrami_core::transforms::{beurling, beurling_adjoint, beurling_conjugate};
use beltrami_core::weights::ap_constant;
use beltrami_core::{
    make_grid, wirtinger_derivative, BeltramiCoefficients, Complex64, CubeFamily, Field, Grid, Weight, Wirtinger,
};
use proptest::prelude::*;
use rand::Rng;

fn grid() -> Grid {
    make_grid(32, 2.0).unwrap()
}

fn noise(grid: &Grid, seed: u64) -> Field {
    let mut r = rng(seed);
    let values = (0..grid.len()).map(|_| Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect();
    Field::new(grid.clone(), values, "noise").unwrap()
}

fn mean_zero(f: Field) -> Field {
    let m = f.mean();
    f.map(|v| v - m).unwrap()
}

fn positive_weight(grid: &Grid, seed: u64) -> Weight {
    let mut r = rng(seed);
    let values = (0..grid.len()).map(|_| r.random_range(0.05..5.0)).collect();
    Weight::new(grid, values, "random").unwrap()
}

fn rel(a: &Field, b: &Field) -> f64 {
    a.sub(b).unwrap().l2_norm() / b.l2_norm().max(1e-300)
}

fn coefficients(grid: &Grid, mu: (f64, f64), nu: (f64, f64)) -> BeltramiCoefficients {
    let c = Complex64::new(0.0, 0.0);
    BeltramiCoefficients::new(
        smooth_bump(grid, c, 0.9, Complex64::new(mu.0, mu.1)).unwrap(),
        smooth_bump(grid, c, 0.7, Complex64::new(nu.0, nu.1)).unwrap(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fft_round_trip_and_parseval(seed in any::<u64>()) {
        let g = grid();
        let f = noise(&g, seed);
        let back = Field::from_spectrum(&g, &f.spectrum(), "back").unwrap();
        prop_assert!(rel(&back, &f) <= 1e-12);
        prop_assert!((f.spectral_l2_norm() - f.l2_norm()).abs() <= 1e-12 * f.l2_norm());
    }

    #[test]
    fn wirtinger_derivatives_commute_and_are_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let g = grid();
        let f = noise(&g, seed);
        let u = noise(&g, seed ^ 0x9e37);
        let dz = |x: &Field| wirtinger_derivative(x, Wirtinger::Dz);
        let dzbar = |x: &Field| wirtinger_derivative(x, Wirtinger::DzBar);
        let mixed = dz(&dzbar(&f));
        prop_assert!(mixed.max_abs_diff(&dzbar(&dz(&f))).unwrap() <= 1e-9 * mixed.sup_norm().max(1.0));
        let c = Complex64::new(a, b);
        let lhs = dz(&f.scale(c).add(&u).unwrap());
        let rhs = dz(&f).scale(c).add(&dz(&u)).unwrap();
        prop_assert!(rel(&lhs, &rhs) <= 1e-12);
    }

    #[test]
    fn beurling_is_a_unitary_on_mean_zero_fields(seed in any::<u64>()) {
        let f = mean_zero(noise(&grid(), seed));
        prop_assert!((beurling(&f).l2_norm() - f.l2_norm()).abs() <= 1e-12 * f.l2_norm());
        prop_assert!(rel(&beurling(&beurling_adjoint(&f)), &f) <= 1e-12);
        prop_assert!(rel(&beurling_adjoint(&beurling(&f)), &f) <= 1e-12);
        prop_assert!((beurling_conjugate(&f).l2_norm() - f.l2_norm()).abs() <= 1e-12 * f.l2_norm());
    }

    #[test]
    fn beurling_maps_dbar_to_d(seed in any::<u64>()) {
        let f = noise(&grid(), seed);
        let lhs = beurling(&f.dzbar());
        prop_assert!(lhs.max_abs_diff(&f.dz()).unwrap() <= 1e-10 * f.dz().sup_norm());
    }

    #[test]
    fn ap_constant_is_at_least_one_and_scale_invariant(seed in any::<u64>(), c in 0.01f64..100.0, p in 1.2f64..4.0) {
        let g = grid();
        let w = positive_weight(&g, seed);
        let cubes = CubeFamily::standard(&g, seed);
        let a = ap_constant(&w, p, &cubes).unwrap();
        prop_assert!(a >= 1.0 - 1e-12);
        let b = ap_constant(&w.scaled(c).unwrap(), p, &cubes).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }

    #[test]
    fn ap_constant_is_monotone_in_the_family(seed in any::<u64>(), p in 1.2f64..4.0) {
        let g = grid();
        let w = positive_weight(&g, seed);
        let small = CubeFamily::dyadic(&g, 8, 16, 0, seed).unwrap();
        let large = small.union(&CubeFamily::standard(&g, seed.wrapping_add(1)));
        prop_assert!(ap_constant(&w, p, &small).unwrap() <= ap_constant(&w, p, &large).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn commutator_is_linear_in_the_input(seed in any::<u64>(), a in -2.0f64..2.0) {
        let g = grid();
        let b = smooth_bump(&g, Complex64::new(0.1, 0.0), 0.8, Complex64::new(1.0, 0.5)).unwrap();
        let f = noise(&g, seed);
        let u = noise(&g, seed.wrapping_mul(3));
        let t = |x: &Field| Ok(beurling(x));
        let c = Complex64::new(a, -a / 2.0);
        let lhs = commutator_apply(&b, t, &f.scale(c).add(&u).unwrap()).unwrap();
        let rhs = commutator_apply(&b, t, &f).unwrap().scale(c).add(&commutator_apply(&b, t, &u).unwrap()).unwrap();
        prop_assert!(rel(&lhs, &rhs) <= 1e-10);
    }

    #[test]
    fn beltrami_operator_contracts_in_l2(
        seed in any::<u64>(),
        mu in (-0.4f64..0.4, -0.4f64..0.4),
        nu in (-0.25f64..0.25, -0.25f64..0.25),
    ) {
        let g = grid();
        let coef = coefficients(&g, mu, nu);
        let u = mean_zero(noise(&g, seed));
        prop_assert!(coef.apply(&u).unwrap().l2_norm() <= coef.k() * u.l2_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn neumann_increments_do_not_grow(seed in any::<u64>(), mu in (-0.5f64..0.5, -0.5f64..0.5)) {
        let g = grid();
        let coef = coefficients(&g, mu, (0.0, 0.0));
        let rhs = mean_zero(noise(&g, seed));
        let mut it = NeumannIteration::new(&coef, &rhs).unwrap();
        let mut last = f64::INFINITY;
        for _ in 0..8 {
            let inc = it.step().unwrap();
            prop_assert!(inc <= last * (1.0 + 1e-12));
            last = inc;
        }
    }

    #[test]
    fn converged_solves_satisfy_the_fixed_point_bound(seed in any::<u64>(), mu in (-0.5f64..0.5, -0.5f64..0.5)) {
        let g = grid();
        let coef = coefficients(&g, mu, (0.1, -0.05));
        let rhs = noise(&g, seed);
        let tol = 1e-10;
        let opts = SolveOptions { tol, max_iter: 400, p: 2.0, weight: None, initial: None };
        let a = neumann_solve(&coef, &rhs, &opts).unwrap();
        let k = coef.k();
        prop_assert!(beltrami_residual(&coef, &a.h, &rhs).unwrap() <= tol * (1.0 + k) / (1.0 - k) * rhs.l2_norm().max(1.0));
        let start = noise(&g, seed ^ 0xabc);
        let b = neumann_solve(&coef, &rhs, &SolveOptions { initial: Some(&start), ..opts }).unwrap();
        prop_assert!(a.h.sub(&b.h).unwrap().l2_norm() <= 10.0 * tol * rhs.l2_norm().max(1.0) * (1.0 + k) / (1.0 - k));
    }

    #[test]
    fn binary_fields_round_trip(seed in any::<u64>()) {
        let f = noise(&grid(), seed);
        let mut bytes = Vec::new();
        write_field(&f, Precision::Complex128, &mut bytes).unwrap();
        let back = read_field(bytes.as_slice(), "back").unwrap();
        prop_assert_eq!(back.values(), f.values());
        prop_assert_eq!(back.grid(), f.grid());
    }
}
