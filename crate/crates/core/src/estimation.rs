//! Neighborhood-restricted least squares and BIC selection of the common
//! neighborhood radius.
//!
//! For a candidate radius every series is regressed on the lags of the series
//! in its neighborhood. Each series picks the radius minimising its own BIC;
//! the model radius is the largest of those picks, and all rows are refitted
//! there.

use serde::{Deserialize, Serialize};

use crate::error::{NvarError, Result};
use crate::geometry::{neighborhood, DistanceMatrix, NeighborhoodIndex};
use crate::linalg::{least_squares_solve, DenseMatrix};
use crate::model::{NvarModel, SeriesPanel};
use crate::par::map_indices;

/// Stand-in BIC for a fit with numerically zero residuals: finite so tables
/// stay serialisable, smaller than any real BIC so the cell always wins.
pub const ZERO_RSS_BIC: f64 = f64::MIN;

const ZERO_RSS_THRESHOLD: f64 = 1e-300;

/// Default penalty multiplier `0.6·log log max(n, 16)`: about 1 at n = 200,
/// growing without bound as n does.
pub fn default_cn(n: usize) -> f64 {
    let n = n.max(16) as f64;
    DEFAULT_CN_SCALE * n.ln().ln()
}

pub const DEFAULT_CN_SCALE: f64 = 0.6;

/// Restricted OLS fit for one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFit {
    pub series: usize,
    /// Neighborhood used as regressors, ascending.
    pub members: Vec<usize>,
    /// Lag-major, neighbor-ascending: `beta[r * tau + m]` multiplies
    /// `y_{members[m]}(t − r − 1)`.
    pub beta: Vec<f64>,
    pub rss: f64,
    pub tau: usize,
}

impl RowFit {
    pub fn q(&self) -> usize {
        if self.tau == 0 {
            0
        } else {
            self.beta.len() / self.tau
        }
    }
}

/// Response and design for series `i` regressed on lags `1..=q` of `members`.
///
/// Rows run backwards in time: row 0 targets `y_i(n)`, the last row targets
/// `y_i(q + 1)` (one-based times).
pub fn build_design(
    panel: &SeriesPanel,
    members: &[usize],
    q: usize,
    i: usize,
) -> Result<(DenseMatrix, Vec<f64>)> {
    let n = panel.n();
    if members.is_empty() {
        return Err(NvarError::invalid("neighborhood is empty"));
    }
    if q == 0 {
        return Err(NvarError::invalid("lag order must be at least 1"));
    }
    if i >= panel.p() || members.iter().any(|&j| j >= panel.p()) {
        return Err(NvarError::invalid("series index out of range"));
    }
    let k = q * members.len();
    if n <= q || n - q < k {
        return Err(NvarError::InsufficientData {
            needed: q + k.max(1),
            available: n,
        });
    }
    let rows = n - q;
    let mut values = Vec::with_capacity(rows * k);
    let mut y = Vec::with_capacity(rows);
    for t in (q..n).rev() {
        y.push(panel.get(i, t));
        for r in 1..=q {
            for &j in members {
                values.push(panel.get(j, t - r));
            }
        }
    }
    Ok((DenseMatrix::from_row_major(rows, k, values)?, y))
}

fn residual_ss(x: &DenseMatrix, y: &[f64], beta: &[f64]) -> f64 {
    x.mul_vec(beta)
        .iter()
        .zip(y)
        .map(|(f, y)| (y - f) * (y - f))
        .sum()
}

pub fn fit_row(panel: &SeriesPanel, members: &[usize], q: usize, i: usize) -> Result<RowFit> {
    let (x, y) = build_design(panel, members, q, i)?;
    let beta = least_squares_solve(&x, &y)?;
    let rss = residual_ss(&x, &y, &beta);
    Ok(RowFit {
        series: i,
        members: members.to_vec(),
        beta,
        rss,
        tau: members.len(),
    })
}

/// `log(rss) + q·tau·c_n·log(max(p, n)) / n`.
pub fn bic(rss: f64, n: usize, q: usize, tau: usize, p: usize, c_n: f64) -> Result<f64> {
    bic_for_params(rss, n, q * tau, p, c_n)
}

/// BIC with an explicit parameter count.
pub fn bic_for_params(rss: f64, n: usize, params: usize, p: usize, c_n: f64) -> Result<f64> {
    if n == 0 {
        return Err(NvarError::invalid("n must be at least 1"));
    }
    if rss.is_nan() || rss <= ZERO_RSS_THRESHOLD {
        return Err(NvarError::ZeroRss);
    }
    let n_f = n as f64;
    Ok(rss.ln() + params as f64 * c_n * (p.max(n) as f64).ln() / n_f)
}

fn bic_or_floor(rss: f64, n: usize, params: usize, p: usize, c_n: f64) -> Result<f64> {
    match bic_for_params(rss, n, params, p, c_n) {
        Err(NvarError::ZeroRss) => Ok(ZERO_RSS_BIC),
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionOptions {
    pub c_n: f64,
    /// Greedy backward elimination of individual predictors at the selected
    /// radius, under the same BIC.
    pub prune: bool,
}

impl SelectionOptions {
    pub fn new(c_n: f64) -> Self {
        SelectionOptions { c_n, prune: false }
    }
}

/// A (radius, series) cell left out of the BIC table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub radius: f64,
    pub series: usize,
    pub reason: String,
}

/// Everything the radius search produced for one lag order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub d_hat: f64,
    pub q: usize,
    pub c_n: f64,
    pub radii: Vec<f64>,
    /// Per-series BIC argmin.
    pub per_series_radius: Vec<f64>,
    /// `bic_table[r][i]` for radius `radii[r]` and series `i`; `None` when skipped.
    pub bic_table: Vec<Vec<Option<f64>>>,
    pub skipped: Vec<SkippedCell>,
    /// Sum over series of the minimal BIC.
    pub bic_sum: f64,
    pub pruned: bool,
    pub row_fits: Vec<RowFit>,
    pub coeffs: Vec<DenseMatrix>,
    /// BIC sums of every lag order tried by [`fit_nvar`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub q_search: Vec<(usize, f64)>,
}

/// Scatter row fits into `q` dense p×p lag matrices.
pub fn assemble_coefficients(p: usize, q: usize, fits: &[RowFit]) -> Vec<DenseMatrix> {
    let mut coeffs = vec![DenseMatrix::zeros(p, p); q];
    for fit in fits {
        for (r, a) in coeffs.iter_mut().enumerate() {
            for (m, &j) in fit.members.iter().enumerate() {
                a[(fit.series, j)] = fit.beta[r * fit.tau + m];
            }
        }
    }
    coeffs
}

enum Cell {
    Fitted(RowFit, f64),
    Skipped(String),
}

fn fit_cell(
    panel: &SeriesPanel,
    nb: &NeighborhoodIndex,
    q: usize,
    i: usize,
    c_n: f64,
) -> Result<Cell> {
    let members = &nb.members[i];
    let n = panel.n();
    let k = q * members.len();
    if n <= q || k >= n - q {
        return Ok(Cell::Skipped(format!(
            "{k} parameters with {} usable observations",
            n.saturating_sub(q)
        )));
    }
    match fit_row(panel, members, q, i) {
        Ok(fit) => {
            let b = bic_or_floor(fit.rss, n, k, panel.p(), c_n)?;
            Ok(Cell::Fitted(fit, b))
        }
        Err(e @ NvarError::RankDeficient { .. }) => Ok(Cell::Skipped(e.to_string())),
        Err(e) => Err(e),
    }
}

/// Radius search for a fixed lag order with default options.
pub fn select_neighborhood(
    panel: &SeriesPanel,
    d: &DistanceMatrix,
    q: usize,
    radii: &[f64],
    c_n: f64,
) -> Result<FitReport> {
    select_neighborhood_with(panel, d, q, radii, SelectionOptions::new(c_n))
}

pub fn select_neighborhood_with(
    panel: &SeriesPanel,
    d: &DistanceMatrix,
    q: usize,
    radii: &[f64],
    opts: SelectionOptions,
) -> Result<FitReport> {
    let p = panel.p();
    if d.p() != p {
        return Err(NvarError::ShapeMismatch(format!(
            "panel has {p} series but distance matrix is {}x{}",
            d.p(),
            d.p()
        )));
    }
    if radii.is_empty() {
        return Err(NvarError::invalid("no candidate radii"));
    }
    if radii.windows(2).any(|w| w[0] >= w[1]) || radii.iter().any(|r| r.is_nan() || *r < 0.0) {
        return Err(NvarError::invalid("radii must be non-negative and strictly ascending"));
    }
    if q == 0 {
        return Err(NvarError::invalid("lag order must be at least 1"));
    }

    let neighborhoods: Vec<NeighborhoodIndex> = radii.iter().map(|&r| neighborhood(d, r)).collect();
    let cells: Vec<Result<Cell>> = map_indices(radii.len() * p, |k| {
        let (r, i) = (k / p, k % p);
        fit_cell(panel, &neighborhoods[r], q, i, opts.c_n)
    });

    let mut grid: Vec<Vec<Option<(RowFit, f64)>>> = vec![vec![None; p]; radii.len()];
    let mut skipped = Vec::new();
    for (k, cell) in cells.into_iter().enumerate() {
        let (r, i) = (k / p, k % p);
        match cell? {
            Cell::Fitted(fit, b) => grid[r][i] = Some((fit, b)),
            Cell::Skipped(reason) => skipped.push(SkippedCell {
                radius: radii[r],
                series: i,
                reason,
            }),
        }
    }

    let mut per_series_idx = Vec::with_capacity(p);
    let mut bic_sum = 0.0;
    for i in 0..p {
        let mut best: Option<(usize, f64)> = None;
        for (r, row) in grid.iter().enumerate() {
            if let Some((_, b)) = &row[i] {
                if best.is_none_or(|(_, bb)| *b < bb) {
                    best = Some((r, *b));
                }
            }
        }
        let (r, b) = best.ok_or(NvarError::NoFeasibleRadius { series: i })?;
        per_series_idx.push(r);
        bic_sum += b;
    }
    let d_idx = per_series_idx.iter().copied().max().unwrap_or(0);
    let d_hat = radii[d_idx];

    let mut row_fits = Vec::with_capacity(p);
    for i in 0..p {
        // a row that cannot be fitted at d_hat keeps its largest feasible
        // smaller radius; its own argmin guarantees one exists
        let fit = (0..=d_idx)
            .rev()
            .find_map(|r| grid[r][i].as_ref())
            .map(|(fit, _)| fit.clone())
            .ok_or(NvarError::NoFeasibleRadius { series: i })?;
        row_fits.push(fit);
    }
    if opts.prune {
        row_fits = map_indices(p, |i| prune_row(panel, &row_fits[i], q, opts.c_n))
            .into_iter()
            .collect::<Result<_>>()?;
    }
    let coeffs = assemble_coefficients(p, q, &row_fits);

    Ok(FitReport {
        d_hat,
        q,
        c_n: opts.c_n,
        radii: radii.to_vec(),
        per_series_radius: per_series_idx.iter().map(|&r| radii[r]).collect(),
        bic_table: grid
            .iter()
            .map(|row| row.iter().map(|c| c.as_ref().map(|(_, b)| *b)).collect())
            .collect(),
        skipped,
        bic_sum,
        pruned: opts.prune,
        row_fits,
        coeffs,
        q_search: Vec::new(),
    })
}

/// Backward elimination over the columns of one row's design. Removed
/// predictors keep a zero coefficient so the beta layout is unchanged.
fn prune_row(panel: &SeriesPanel, fit: &RowFit, q: usize, c_n: f64) -> Result<RowFit> {
    let (x, y) = build_design(panel, &fit.members, q, fit.series)?;
    let (n, p) = (panel.n(), panel.p());
    let k = x.cols();
    let mut active: Vec<usize> = (0..k).collect();
    let mut beta = fit.beta.clone();
    let mut rss = fit.rss;
    let mut current = bic_or_floor(rss, n, active.len(), p, c_n)?;

    let restricted_fit = |cols: &[usize]| -> Result<(Vec<f64>, f64)> {
        if cols.is_empty() {
            return Ok((vec![0.0; k], y.iter().map(|v| v * v).sum()));
        }
        let mut sub = DenseMatrix::zeros(x.rows(), cols.len());
        for row in 0..x.rows() {
            for (c, &col) in cols.iter().enumerate() {
                sub[(row, c)] = x[(row, col)];
            }
        }
        let b = least_squares_solve(&sub, &y)?;
        let mut full = vec![0.0; k];
        for (c, &col) in cols.iter().enumerate() {
            full[col] = b[c];
        }
        let rss = residual_ss(&x, &y, &full);
        Ok((full, rss))
    };

    while !active.is_empty() {
        let mut best: Option<(usize, Vec<f64>, f64, f64)> = None;
        for drop in 0..active.len() {
            let cols: Vec<usize> = active
                .iter()
                .enumerate()
                .filter(|&(pos, _)| pos != drop)
                .map(|(_, &c)| c)
                .collect();
            let (b, r) = restricted_fit(&cols)?;
            let score = bic_or_floor(r, n, cols.len(), p, c_n)?;
            if best.as_ref().is_none_or(|(_, _, _, s)| score < *s) {
                best = Some((drop, b, r, score));
            }
        }
        let Some((drop, b, r, score)) = best else {
            break;
        };
        if score >= current {
            break;
        }
        active.remove(drop);
        beta = b;
        rss = r;
        current = score;
    }

    Ok(RowFit {
        beta,
        rss,
        ..fit.clone()
    })
}

/// Joint search over lag orders: runs the radius search for each `q` and
/// keeps the one with the smallest BIC sum (ties to the smaller `q`).
pub fn fit_nvar(
    panel: &SeriesPanel,
    d: &DistanceMatrix,
    q_grid: &[usize],
    radii: &[f64],
    c_n: f64,
) -> Result<(NvarModel, FitReport)> {
    fit_nvar_with(panel, d, q_grid, radii, SelectionOptions::new(c_n))
}

pub fn fit_nvar_with(
    panel: &SeriesPanel,
    d: &DistanceMatrix,
    q_grid: &[usize],
    radii: &[f64],
    opts: SelectionOptions,
) -> Result<(NvarModel, FitReport)> {
    if q_grid.is_empty() {
        return Err(NvarError::invalid("lag order grid is empty"));
    }
    let mut best: Option<FitReport> = None;
    let mut q_search = Vec::with_capacity(q_grid.len());
    for &q in q_grid {
        let report = select_neighborhood_with(panel, d, q, radii, opts)?;
        q_search.push((q, report.bic_sum));
        let better = match &best {
            None => true,
            Some(b) => report.bic_sum < b.bic_sum || (report.bic_sum == b.bic_sum && q < b.q),
        };
        if better {
            best = Some(report);
        }
    }
    let mut report = best.expect("q_grid is non-empty");
    report.q_search = q_search;
    let model = NvarModel::new(report.coeffs.clone(), report.d_hat, d.clone())?;
    Ok((model, report))
}

/// `ŷ(t) = Σ_r A_r y(t − r)` from the last `q` columns of `history`
/// (oldest first, most recent last).
pub fn predict_one_step(model: &NvarModel, history: &[Vec<f64>]) -> Result<Vec<f64>> {
    let q = model.q();
    if history.len() < q {
        return Err(NvarError::HistoryTooShort {
            needed: q,
            got: history.len(),
        });
    }
    let p = model.p();
    if history.iter().any(|c| c.len() != p) {
        return Err(NvarError::ShapeMismatch(format!(
            "history columns must have {p} entries"
        )));
    }
    let mut out = vec![0.0; p];
    for (r, a) in model.coeffs().iter().enumerate() {
        let col = &history[history.len() - 1 - r];
        for (o, v) in out.iter_mut().zip(a.mul_vec(col)) {
            *o += v;
        }
    }
    Ok(out)
}

/// One-step prediction of column `t` of `panel` from the observed columns
/// `t − q .. t`.
pub fn predict_at(model: &NvarModel, panel: &SeriesPanel, t: usize) -> Result<Vec<f64>> {
    let q = model.q();
    if t < q {
        return Err(NvarError::HistoryTooShort { needed: q, got: t });
    }
    let history: Vec<Vec<f64>> = (t - q..t).map(|s| panel.column(s)).collect();
    predict_one_step(model, &history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{default_ids, lattice1d_distances};
    use crate::model::{generate_case1, simulate, NoiseSpec};

    fn panel_from(series: Vec<Vec<f64>>) -> SeriesPanel {
        SeriesPanel::from_series(default_ids(series.len()), series).unwrap()
    }

    #[test]
    fn design_layout_single_series() {
        let panel = panel_from(vec![vec![1.0, 2.0, 3.0, 4.0]]);
        let (x, y) = build_design(&panel, &[0], 1, 0).unwrap();
        assert_eq!(y, vec![4.0, 3.0, 2.0]);
        assert_eq!(x.values(), &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn design_layout_is_lag_major() {
        let panel = panel_from(vec![
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0],
        ]);
        let (x, y) = build_design(&panel, &[0, 1], 2, 1).unwrap();
        assert_eq!(y, vec![60.0, 50.0, 40.0, 30.0]);
        // row for t=6: lag 1 → (5, 50), lag 2 → (4, 40)
        assert_eq!(x.row(0), &[5.0, 50.0, 4.0, 40.0]);
        assert_eq!(x.row(3), &[2.0, 20.0, 1.0, 10.0]);
    }

    #[test]
    fn design_boundary_and_errors() {
        let panel = panel_from(vec![vec![1.0, 2.0]]);
        let (x, _) = build_design(&panel, &[0], 1, 0).unwrap();
        assert_eq!(x.rows(), 1);
        let short = panel_from(vec![vec![1.0, 2.0, 3.0]]);
        assert!(build_design(&short, &[0], 2, 0).is_err());
        let wide = panel_from(vec![vec![1.0, 2.0, 3.0]; 3]);
        let (x, _) = build_design(&wide, &[0, 1], 1, 0).unwrap();
        assert_eq!(x.cols(), 2);
        assert!(matches!(
            build_design(&wide, &[0, 1, 2], 1, 0),
            Err(NvarError::InsufficientData { .. })
        ));
    }

    #[test]
    fn bic_examples() {
        assert_eq!(bic(2.0, 100, 1, 3, 10, 0.0).unwrap(), 2.0_f64.ln());
        let b = bic(std::f64::consts::E, 100, 1, 2, 100, 1.0).unwrap();
        assert!((b - (1.0 + 2.0 * 100f64.ln() / 100.0)).abs() < 1e-12);
        assert!(bic(1.0, 50, 1, 3, 10, 2.0).unwrap() > bic(1.0, 50, 1, 2, 10, 2.0).unwrap());
        assert!(matches!(bic(0.0, 10, 1, 1, 1, 1.0), Err(NvarError::ZeroRss)));
    }

    #[test]
    fn default_cn_values() {
        assert_eq!(default_cn(10), default_cn(16));
        let expected = 0.6 * 200f64.ln().ln();
        assert!((default_cn(200) - expected).abs() < 1e-15);
        assert!((default_cn(200) - 1.0).abs() < 1e-3);
        assert!(default_cn(800) > default_cn(200));
    }

    #[test]
    fn single_radius_is_selected() {
        let m = generate_case1(8, 1, 1).unwrap();
        let panel = simulate(&m, NoiseSpec::new(1.0).unwrap(), 120, 50, 2).unwrap();
        let rep = select_neighborhood(&panel, &lattice1d_distances(8), 1, &[2.0], 3.0).unwrap();
        assert_eq!(rep.d_hat, 2.0);
        assert!(rep.per_series_radius.iter().all(|&r| r == 2.0));
    }

    #[test]
    fn infeasible_radii_are_skipped() {
        let m = generate_case1(10, 1, 1).unwrap();
        let panel = simulate(&m, NoiseSpec::new(1.0).unwrap(), 8, 50, 2).unwrap();
        let d = lattice1d_distances(10);
        let rep = select_neighborhood(&panel, &d, 1, &[0.0, 1.0, 5.0], 2.0).unwrap();
        assert!(rep.skipped.iter().all(|c| c.radius == 5.0));
        assert!(!rep.skipped.is_empty());
        // rows that cannot take d_hat fall back to a feasible radius
        for fit in &rep.row_fits {
            assert!(fit.q() * fit.tau < 7);
        }
        assert!(matches!(
            select_neighborhood(&panel, &d, 1, &[5.0], 2.0),
            Err(NvarError::NoFeasibleRadius { .. })
        ));
    }

    #[test]
    fn tie_breaks_to_smallest_radius() {
        // radii 0 and 0.5 give the same neighborhoods on an integer lattice
        let m = generate_case1(6, 0, 1).unwrap();
        let panel = simulate(&m, NoiseSpec::new(1.0).unwrap(), 100, 50, 3).unwrap();
        let rep =
            select_neighborhood(&panel, &lattice1d_distances(6), 1, &[0.0, 0.5], 2.0).unwrap();
        assert!(rep.per_series_radius.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn predict_examples() {
        let m = generate_case1(3, 1, 0).unwrap();
        assert_eq!(predict_one_step(&m, &[vec![0.0; 3]]).unwrap(), vec![0.0; 3]);

        let scalar = NvarModel::new(
            vec![DenseMatrix::from_diagonal(&[0.5])],
            0.0,
            lattice1d_distances(1),
        )
        .unwrap();
        assert_eq!(predict_one_step(&scalar, &[vec![2.0]]).unwrap(), vec![1.0]);

        let ident =
            NvarModel::new(vec![DenseMatrix::identity(3)], 0.0, lattice1d_distances(3)).unwrap();
        let last = vec![1.0, -2.0, 3.5];
        assert_eq!(
            predict_one_step(&ident, &[vec![9.0; 3], last.clone()]).unwrap(),
            last
        );
        assert!(matches!(
            predict_one_step(&ident, &[]),
            Err(NvarError::HistoryTooShort { .. })
        ));
    }

    #[test]
    fn pruning_drops_irrelevant_predictors() {
        let m = generate_case1(12, 0, 5).unwrap();
        let panel = simulate(&m, NoiseSpec::new(1.0).unwrap(), 400, 50, 6).unwrap();
        let d = lattice1d_distances(12);
        let opts = SelectionOptions {
            c_n: 3.0,
            prune: true,
        };
        let rep = select_neighborhood_with(&panel, &d, 1, &[2.0], opts).unwrap();
        assert!(rep.pruned);
        let zeros = rep.coeffs[0].values().iter().filter(|v| **v == 0.0).count();
        let unpruned = select_neighborhood(&panel, &d, 1, &[2.0], 3.0).unwrap();
        let zeros_before = unpruned.coeffs[0].values().iter().filter(|v| **v == 0.0).count();
        assert!(zeros > zeros_before);
        for (a, b) in rep.row_fits.iter().zip(&unpruned.row_fits) {
            assert!(a.rss >= b.rss - 1e-12);
        }
    }
}
