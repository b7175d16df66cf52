mod common;

use common::props::{self, Check};
use nvar_core::baselines::{
    lasso_row, order_series, LassoConfig, LassoProblem, OrderingStrategy,
};
use nvar_core::geometry::default_ids;
use nvar_core::linalg::{frobenius_norm, spectral_norm, stationarity_margin};
use nvar_core::SensorLayout;
use proptest::prelude::*;
use rand::Rng;

fn run(check: Check) -> Result<(), TestCaseError> {
    check.map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nested_rss_is_monotone(seed in any::<u64>()) {
        run(props::nested_rss(seed))?;
    }

    #[test]
    fn neighborhoods_nest_and_contain_self(seed in any::<u64>()) {
        run(props::neighborhood_nesting(seed))?;
    }

    #[test]
    fn fits_are_permutation_equivariant(seed in any::<u64>()) {
        run(props::permutation_equivariance(seed))?;
    }

    #[test]
    fn noiseless_dynamics_are_recovered_exactly(seed in any::<u64>()) {
        run(props::exact_recovery(seed))?;
    }

    #[test]
    fn lasso_is_zero_above_the_null_threshold(seed in any::<u64>()) {
        run(props::lasso_null_threshold(seed))?;
    }

    #[test]
    fn lasso_without_penalty_is_least_squares(seed in any::<u64>()) {
        run(props::lasso_zero_penalty(seed))?;
    }

    #[test]
    fn bic_argmins_ignore_panel_scale(seed in any::<u64>()) {
        run(props::bic_scale_invariance(seed))?;
    }

    #[test]
    fn norm_sandwich(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let rows = rng.random_range(1..=20);
        let cols = rng.random_range(1..=20);
        let a = common::gaussian_matrix(&mut rng, rows, cols);
        let (f, s) = (frobenius_norm(&a), spectral_norm(&a));
        prop_assert!(f >= s * (1.0 - 1e-12));
        prop_assert!(s >= f / (rows.min(cols) as f64).sqrt() * (1.0 - 1e-12));
    }

    #[test]
    fn contractions_are_stationary(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let p = rng.random_range(1..=15);
        let a = common::gaussian_matrix(&mut rng, p, p);
        let a = a.scale(rng.random_range(0.01..0.999) / spectral_norm(&a));
        prop_assert!(stationarity_margin(&a).unwrap().is_stationary);
    }

    #[test]
    fn lasso_objective_never_increases(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let k = rng.random_range(2..=20);
        let n = rng.random_range(10..=60);
        let x = common::gaussian_matrix(&mut rng, n, k);
        let y: Vec<f64> = (0..n).map(|_| common::gaussian(&mut rng)).collect();
        let lmax = LassoProblem::new(&x).lambda_max(&y);
        let fit = lasso_row(&x, &y, lmax * rng.random_range(0.01..1.0), &LassoConfig::default()).unwrap();
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn lasso_path_moves_continuously(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let k = rng.random_range(2..=10);
        let n = rng.random_range(4 * k..=4 * k + 40);
        let x = common::gaussian_matrix(&mut rng, n, k);
        let y: Vec<f64> = (0..n).map(|_| common::gaussian(&mut rng)).collect();
        let problem = LassoProblem::new(&x);
        let lmax = problem.lambda_max(&y);
        let lambdas: Vec<f64> = (0..40).map(|s| lmax * (1.0 - s as f64 / 40.0)).collect();
        let cfg = LassoConfig { tol: 1e-10, ..LassoConfig::default() };
        let path = problem.path(&y, &lambdas, &cfg);
        let step = lmax / 40.0;
        // loose smoke constant; the solution path is piecewise linear in λ
        let bound = 50.0 * step * (1.0 + lmax);
        for w in path.windows(2) {
            let gap = w[0].beta.iter().zip(&w[1].beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(gap <= bound, "jump {gap} over Δλ {step}");
        }
    }

    #[test]
    fn orderings_are_bijections(seed in any::<u64>(), which in 0usize..6) {
        let mut rng = common::rng(seed);
        let p = rng.random_range(1..=30);
        let coords = (0..p).map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
        let layout = SensorLayout::with_coordinates(default_ids(p), coords).unwrap();
        let mut custom: Vec<usize> = (0..p).collect();
        custom.reverse();
        let strategy = [
            OrderingStrategy::Identity,
            OrderingStrategy::Longitude,
            OrderingStrategy::Latitude,
            OrderingStrategy::Pca1,
            OrderingStrategy::Pca2,
            OrderingStrategy::Custom(custom),
        ][which].clone();
        let mut order = order_series(&layout, &strategy).unwrap();
        order.sort_unstable();
        prop_assert_eq!(order, (0..p).collect::<Vec<_>>());
    }
}
