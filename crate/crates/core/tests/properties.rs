use adaps::guidance::{adaptive_xi, alignment, map_estimate};
use adaps::nonlinear::{nl_map_estimate_traced, GnConfig, NonlinearOperator};
use adaps::operators::{LinearOperator, Measurement};
use adaps::Vector;
use nalgebra::{Cholesky, DMatrix};
use proptest::prelude::*;

fn vec_strategy(n: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-2.0..2.0f64, n).prop_map(Vector::from_vec)
}

fn problem() -> impl Strategy<Value = (DMatrix<f64>, Vector, Vector, f64, f64)> {
    (1usize..6, 1usize..8).prop_flat_map(|(m, n)| {
        (
            prop::collection::vec(-1.0..1.0f64, m * n).prop_map(move |d| DMatrix::from_vec(m, n, d)),
            vec_strategy(m),
            vec_strategy(n),
            0.05..1.0f64,
            0.05..1.0f64,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn push_through_matches_primal((a, y, x0, sigma, r_sq) in problem()) {
        let n = a.ncols();
        let op = LinearOperator::dense(a.clone()).unwrap();
        let dual = map_estimate(&op, &Measurement::new(y.clone(), sigma).unwrap(), &x0, r_sq).unwrap();
        let h = a.transpose() * &a / (sigma * sigma) + DMatrix::identity(n, n) / r_sq;
        let primal = Cholesky::new(h).unwrap().solve(&(a.transpose() * &y / (sigma * sigma) + &x0 / r_sq));
        prop_assert!((dual - &primal).amax() <= 1e-9 * primal.amax().max(1.0));
    }

    #[test]
    fn gram_apply_is_linear((a, u, _, lambda, c) in problem()) {
        let op = LinearOperator::dense(a).unwrap();
        let v = u.map(|x| x * 0.5 - 0.1);
        let lhs = op.gram_apply(lambda, &(&u * c + &v)).unwrap();
        let rhs = op.gram_apply(lambda, &u).unwrap() * c + op.gram_apply(lambda, &v).unwrap();
        prop_assert!((lhs - rhs).amax() <= 1e-12);
    }

    #[test]
    fn gram_solve_inverts_gram_apply((a, u, _, lambda, _) in problem()) {
        let op = LinearOperator::dense(a).unwrap();
        let back = op.gram_solve(lambda, &op.gram_apply(lambda, &u).unwrap()).unwrap();
        prop_assert!((back - &u).amax() <= 1e-8 * u.amax().max(1.0));
    }

    #[test]
    fn adaptive_update_ignores_scale_of_g(d in vec_strategy(6), g in vec_strategy(6), c in 1e-3..1e3f64) {
        prop_assume!(g.norm() > 1e-6);
        let base = &g * adaptive_xi(&d, &g);
        let scaled = &g * c;
        let other = &scaled * adaptive_xi(&d, &scaled);
        prop_assert!((other - &base).amax() <= 1e-12 * base.amax().max(1.0));
    }

    #[test]
    fn xi_is_twice_norm_times_alignment(d in vec_strategy(5), g in vec_strategy(5)) {
        prop_assume!(g.norm() > 1e-6 && d.norm() > 1e-6);
        let unit = &g / g.norm();
        let expected = 2.0 * d.norm() * alignment(&d, &g);
        prop_assert!((adaptive_xi(&d, &unit) - expected).abs() <= 1e-10 * expected.abs().max(1.0));
    }

    #[test]
    fn gauss_newton_never_increases_objective(
        x0 in vec_strategy(3),
        y in vec_strategy(3),
        a in -0.5..1.0f64,
        b in 0.3..3.0f64,
        sigma in 0.05..1.0f64,
        r_sq in 0.05..1.0f64,
    ) {
        let op = NonlinearOperator::Tanh { dim: 3, a, b };
        let trace = nl_map_estimate_traced(&op, &y, sigma, &x0, r_sq, &GnConfig { iterations: 20, ..GnConfig::default() }).unwrap();
        prop_assert!(trace.objective.windows(2).all(|w| w[1] <= w[0]));
    }
}
