//! Independent reference implementations and seeded generators shared by the
//! integration tests and the acceptance target.
//!
//! Nothing here calls the solver code it is used to check: regressions go
//! through the normal equations, singular values through one-sided Jacobi,
//! and the submatrix search through exhaustive enumeration.
#![allow(dead_code)]

pub mod props;

use nvar_core::ingest::RaggedMonthlyGrid;
use nvar_core::{DenseMatrix, SeriesPanel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let values = (0..rows * cols).map(|_| gaussian(rng)).collect();
    DenseMatrix::from_row_major(rows, cols, values).unwrap()
}

pub fn white_noise_panel(rng: &mut ChaCha8Rng, p: usize, n: usize) -> SeriesPanel {
    let series = (0..p)
        .map(|_| (0..n).map(|_| gaussian(rng)).collect())
        .collect();
    SeriesPanel::from_series(nvar_core::geometry::default_ids(p), series).unwrap()
}

/// Solve `XᵀX β = Xᵀy` by Gaussian elimination with partial pivoting.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let k = x.first()?.len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (row, &yt) in x.iter().zip(y) {
        for r in 0..k {
            for c in 0..k {
                a[r][c] += row[r] * row[c];
            }
            a[r][k] += row[r] * yt;
        }
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    Some((0..k).map(|r| a[r][k] / a[r][r]).collect())
}

/// Regression of `y_i(t)` on `y_j(t − l)` for `j` in `members`, `l = 1..=q`,
/// built forward in time with lag-major columns.
pub struct OracleFit {
    pub beta: Vec<f64>,
    pub rss: f64,
}

pub fn oracle_row_fit(panel: &SeriesPanel, members: &[usize], q: usize, i: usize) -> Option<OracleFit> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for t in q..panel.n() {
        let mut row = Vec::with_capacity(q * members.len());
        for l in 1..=q {
            row.extend(members.iter().map(|&j| panel.get(j, t - l)));
        }
        x.push(row);
        y.push(panel.get(i, t));
    }
    let beta = normal_equations(&x, &y)?;
    let rss = x
        .iter()
        .zip(&y)
        .map(|(row, yt)| {
            let fit: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (yt - fit).powi(2)
        })
        .sum();
    Some(OracleFit { beta, rss })
}

/// Singular values by one-sided Jacobi rotations on the columns, descending.
pub fn jacobi_singular_values(a: &DenseMatrix) -> Vec<f64> {
    // work on the orientation with fewer columns
    let m = if a.cols() > a.rows() { a.transpose() } else { a.clone() };
    let (rows, cols) = (m.rows(), m.cols());
    let mut u: Vec<Vec<f64>> = (0..cols).map(|j| m.column(j)).collect();
    for _sweep in 0..100 {
        let mut off = 0.0_f64;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = u[p].iter().map(|v| v * v).sum();
                let beta: f64 = u[q].iter().map(|v| v * v).sum();
                let gamma: f64 = u[p].iter().zip(&u[q]).map(|(a, b)| a * b).sum();
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let (up, uq) = (u[p][r], u[q][r]);
                    u[p][r] = c * up - s * uq;
                    u[q][r] = s * up + c * uq;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut sv: Vec<f64> = u
        .iter()
        .map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Random site × month grid with the given missing-cell probability.
pub fn random_grid(rng: &mut ChaCha8Rng, sites: usize, months: usize, missing: f64) -> RaggedMonthlyGrid {
    let values = (0..sites)
        .map(|_| {
            (0..months)
                .map(|_| {
                    if rng.random::<f64>() < missing {
                        None
                    } else {
                        Some(rng.random::<f64>())
                    }
                })
                .collect()
        })
        .collect();
    RaggedMonthlyGrid {
        sites: (0..sites).map(|s| format!("S{s:02}")).collect(),
        first_month: 0,
        values,
    }
}

/// Largest `sites × months` product over every site subset and window that
/// is fully observed.
pub fn brute_force_best_score(grid: &RaggedMonthlyGrid) -> usize {
    let sites = grid.values.len();
    let months = grid.months();
    let mut best = 0;
    for mask in 1u32..(1 << sites) {
        let chosen: Vec<usize> = (0..sites).filter(|s| mask >> s & 1 == 1).collect();
        for start in 0..months {
            for end in start + 1..=months {
                let complete = chosen
                    .iter()
                    .all(|&s| (start..end).all(|m| grid.values[s][m].is_some()));
                if complete {
                    best = best.max(chosen.len() * (end - start));
                }
            }
        }
    }
    best
}

/// Banded VAR(1) written out directly: members of row `i` at bandwidth `b`
/// are `|i − j| ≤ b`, the penalty is `τ·c_n·ln(max(p, n))/n`, argmins break
/// ties to the smaller bandwidth, and all rows are refit at the largest
/// argmin.
pub struct BandOracle {
    pub bandwidth: usize,
    pub per_series: Vec<usize>,
    /// Dense p×p lag-1 coefficients.
    pub coeffs: Vec<Vec<f64>>,
}

pub fn band_ols_oracle(panel: &SeriesPanel, bandwidths: &[usize], c_n: f64) -> BandOracle {
    let (p, n) = (panel.p(), panel.n());
    let members = |i: usize, b: usize| -> Vec<usize> {
        (i.saturating_sub(b)..=(i + b).min(p - 1)).collect()
    };
    let per_series: Vec<usize> = (0..p)
        .map(|i| {
            let mut best: Option<(f64, usize)> = None;
            for &b in bandwidths {
                let m = members(i, b);
                let fit = oracle_row_fit(panel, &m, 1, i).expect("band design is full rank");
                let score =
                    fit.rss.ln() + m.len() as f64 * c_n * (p.max(n) as f64).ln() / n as f64;
                if best.is_none_or(|(s, _)| score < s) {
                    best = Some((score, b));
                }
            }
            best.unwrap().1
        })
        .collect();
    let bandwidth = *per_series.iter().max().unwrap();
    let mut coeffs = vec![vec![0.0; p]; p];
    for (i, row) in coeffs.iter_mut().enumerate() {
        let m = members(i, bandwidth);
        let fit = oracle_row_fit(panel, &m, 1, i).unwrap();
        for (&j, b) in m.iter().zip(&fit.beta) {
            row[j] = *b;
        }
    }
    BandOracle {
        bandwidth,
        per_series,
        coeffs,
    }
}
