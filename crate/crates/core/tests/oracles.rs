mod common;

use common::props;
use common::*;
use nvar_core::baselines::{fit_bvar, OrderingStrategy};
use nvar_core::estimation::{default_cn, fit_row};
use nvar_core::evaluation::coefficient_errors;
use nvar_core::geometry::{lattice1d_distances, neighborhood};
use nvar_core::linalg::{least_squares_solve, spectral_norm};
use nvar_core::model::{generate_case1, simulate};
use nvar_core::{fit_nvar, DenseMatrix, NoiseSpec, NvarModel, SensorLayout};

#[test]
fn fit_row_matches_normal_equations_on_200_instances() {
    let worst = (0..200).map(props::fit_row_deviation).fold(0.0, f64::max);
    assert!(worst < 1e-8, "max deviation {worst:e}");
}

#[test]
fn spectral_norm_matches_jacobi_svd_on_100_matrices() {
    let worst = (0..100)
        .map(|s| props::spectral_norm_relative_error(1000 + s))
        .fold(0.0, f64::max);
    assert!(worst < 1e-8, "max relative error {worst:e}");
}

#[test]
fn jacobi_oracle_sanity() {
    let d = DenseMatrix::from_diagonal(&[3.0, -5.0, 1.0]);
    let sv = jacobi_singular_values(&d);
    assert!((sv[0] - 5.0).abs() < 1e-14 && (sv[2] - 1.0).abs() < 1e-14);
    let a = DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![4.0, 5.0]]).unwrap();
    // singular values of [[3,0],[4,5]] are √45 and √5
    let sv = jacobi_singular_values(&a);
    assert!((sv[0] - 45f64.sqrt()).abs() < 1e-12, "{sv:?}");
    assert!((sv[1] - 5f64.sqrt()).abs() < 1e-12, "{sv:?}");
}

#[test]
fn submatrix_search_matches_exhaustive_enumeration_on_200_grids() {
    for seed in 0..200 {
        let (ours, oracle) = props::submatrix_scores(seed);
        assert_eq!(ours, oracle, "seed {seed}");
    }
}

#[test]
fn least_squares_reproduces_consistent_systems() {
    let mut rng = rng(7);
    for _ in 0..50 {
        let k = 1 + (gaussian(&mut rng).abs() * 3.0) as usize % 8;
        let x = gaussian_matrix(&mut rng, k + 10, k);
        let truth: Vec<f64> = (0..k).map(|_| gaussian(&mut rng)).collect();
        let y = x.mul_vec(&truth);
        let beta = least_squares_solve(&x, &y).unwrap();
        let gap = beta.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-8, "gap {gap:e}");
    }
}

#[test]
fn fit_row_normal_equations_handworked() {
    // X = [[1,0],[1,1],[1,2]], y = (0,1,2) by the oracle
    let x = vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]];
    let beta = normal_equations(&x, &[0.0, 1.0, 2.0]).unwrap();
    assert!(beta[0].abs() < 1e-14 && (beta[1] - 1.0).abs() < 1e-14);
}

#[test]
fn banded_var_matches_independent_band_ols() {
    for seed in 0..10 {
        let (p, n, d0) = (30, 150, 1 + seed as usize % 2);
        let truth = generate_case1(p, d0, seed).unwrap();
        let panel = simulate(&truth, NoiseSpec::new(1.0).unwrap(), n, 200, seed).unwrap();
        let bands = [0, 1, 2, 3, 4];
        let c_n = default_cn(n);
        let oracle = band_ols_oracle(&panel, &bands, c_n);
        let radii: Vec<f64> = bands.iter().map(|&b| b as f64).collect();
        let (_, nvar) = fit_nvar(&panel, &lattice1d_distances(p), &[1], &radii, c_n).unwrap();
        let (_, bvar) = fit_bvar(&panel, &SensorLayout::lattice(p), &OrderingStrategy::Identity, &[1], &bands, c_n)
            .unwrap();
        for rep in [&nvar, &bvar] {
            assert_eq!(rep.d_hat, oracle.bandwidth as f64, "seed {seed}");
            let per: Vec<usize> = rep.per_series_radius.iter().map(|&r| r as usize).collect();
            assert_eq!(per, oracle.per_series, "seed {seed}");
            for i in 0..p {
                for j in 0..p {
                    let gap = (rep.coeffs[0][(i, j)] - oracle.coeffs[i][j]).abs();
                    assert!(gap < 1e-10, "seed {seed} ({i},{j}) gap {gap:e}");
                }
            }
        }
    }
}

#[test]
fn coefficient_errors_agree_with_svd_oracle() {
    let mut rng = rng(11);
    for _ in 0..20 {
        let p = 12;
        let d = lattice1d_distances(p);
        let dense = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut a = gaussian_matrix(rng, p, p);
            for i in 0..p {
                for j in 0..p {
                    if i.abs_diff(j) > 2 {
                        a[(i, j)] = 0.0;
                    }
                }
            }
            a
        };
        let (a, b) = (dense(&mut rng), dense(&mut rng));
        let diff = a.sub(&b).unwrap();
        let ma = NvarModel::new(vec![a], 2.0, d.clone()).unwrap();
        let mb = NvarModel::new(vec![b], 2.0, d.clone()).unwrap();
        let errs = coefficient_errors(&ma, &mb).unwrap();
        let oracle = jacobi_singular_values(&diff)[0];
        assert!((errs.l2 - oracle).abs() / oracle < 1e-8);
        assert!((spectral_norm(&diff) - oracle).abs() / oracle < 1e-8);
    }
}

#[test]
fn fit_row_agrees_with_oracle_on_neighborhoods() {
    let mut rng = rng(3);
    let p = 5;
    let panel = white_noise_panel(&mut rng, p, 50);
    let d = lattice1d_distances(p);
    for r in 0..3 {
        let nb = neighborhood(&d, r as f64);
        for i in 0..p {
            let ours = fit_row(&panel, &nb.members[i], 2, i).unwrap();
            let oracle = oracle_row_fit(&panel, &nb.members[i], 2, i).unwrap();
            for (a, b) in ours.beta.iter().zip(&oracle.beta) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
