mod common;

use impulsive::lp::{lp_solve, Constraints};
use impulsive::nnls::nnls;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn lp_instance(seed: u64) -> (Vec<f64>, DMatrix<f64>, Vec<f64>, f64) {
    let mut rng = common::rng(seed);
    let n = rng.random_range(2..=5);
    let m = rng.random_range(1..=15);
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    // Nonnegative right-hand sides keep the origin feasible, as for cuts.
    let b: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..2.0)).collect();
    (c, a, b, rng.random_range(0.5..20.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn lp_matches_vertex_enumeration(seed in any::<u64>()) {
        let (c, a, b, r) = lp_instance(seed);
        let mut cons = Constraints::new(c.len());
        for (i, &bi) in b.iter().enumerate() {
            let row: Vec<f64> = a.row(i).iter().copied().collect();
            cons.push(&row, bi);
        }
        let sol = lp_solve(&c, &cons, r).unwrap();
        let exact = common::lp_by_vertices(&c, &a, &b, r);
        prop_assert!((sol.objective - exact).abs() <= 1e-9 * (1.0 + exact.abs()), "{} vs {}", sol.objective, exact);
        prop_assert!(sol.complementarity <= 1e-10, "complementarity {}", sol.complementarity);
        prop_assert!(sol.max_violation <= 1e-9);
        prop_assert!(sol.duals.iter().all(|&y| y >= 0.0));
        prop_assert!((sol.objective - sol.dual_objective).abs() <= 1e-9 * (1.0 + exact.abs()));
    }

    #[test]
    fn nnls_matches_exhaustive_active_sets(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let k = rng.random_range(1..=6);
        let y = DMatrix::from_fn(6, k, |_, _| rng.random_range(-1.0..1.0));
        let w = common::uniform_vec(&mut rng, 6, 1.0);
        let l = DMatrix::from_fn(6, 6, |i, j| if i >= j { rng.random_range(-1.0..1.0) } else { 0.0 });
        let q = &l * l.transpose() + DMatrix::identity(6, 6) * 0.1;
        let sol = nnls(&y, &w, &q).unwrap();
        let exact = common::nnls_by_subsets(&y, &w, &q);
        prop_assert!((sol.objective - exact).abs() <= 1e-9 * (1.0 + exact));
        prop_assert!(sol.alpha.iter().all(|&a| a >= 0.0));
        prop_assert!(sol.kkt_violation(&y, &w, &q) <= 1e-10, "kkt {}", sol.kkt_violation(&y, &w, &q));
    }

    #[test]
    fn nnls_two_columns_closed_form(a1 in 0.1..5.0f64, a2 in 0.1..5.0f64, seed in any::<u64>()) {
        // w strictly inside the cone of two columns is reproduced exactly.
        let mut rng = common::rng(seed);
        let y = DMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0));
        let w = &y * DVector::from_vec(vec![a1, a2]);
        let sol = nnls(&y, &w, &DMatrix::identity(6, 6)).unwrap();
        let g = y.transpose() * &y;
        let rhs = y.transpose() * &w;
        let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
        let x1 = (g[(1, 1)] * rhs[0] - g[(0, 1)] * rhs[1]) / det;
        let x2 = (g[(0, 0)] * rhs[1] - g[(1, 0)] * rhs[0]) / det;
        prop_assert!((sol.alpha[0] - x1).abs() <= 1e-8 * (1.0 + x1.abs()));
        prop_assert!((sol.alpha[1] - x2).abs() <= 1e-8 * (1.0 + x2.abs()));
    }
}

#[test]
fn lp_degenerate_face() {
    let mut cons = Constraints::new(2);
    cons.push(&[1.0, 1.0], 1.0);
    cons.push(&[1.0, 0.0], 0.7);
    let sol = lp_solve(&[1.0, 1.0], &cons, 10.0).unwrap();
    assert!((sol.objective - 1.0).abs() < 1e-12);
}
