//! Comparison estimators: banded VAR over a one-dimensional ordering of the
//! series, and per-row lasso over the full lagged design.

use serde::{Deserialize, Serialize};

use crate::error::{NvarError, Result};
use crate::estimation::{
    bic_for_params, default_cn, fit_nvar, FitReport, SkippedCell, ZERO_RSS_BIC,
};
use crate::geometry::{lattice1d_distances, DistanceMatrix, SensorLayout};
use crate::linalg::DenseMatrix;
use crate::model::{NvarModel, SeriesPanel};
use crate::par::map_indices;

/// How series are placed on a line for the banded VAR.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderingStrategy {
    Identity,
    Longitude,
    Latitude,
    Pca1,
    Pca2,
    Custom(Vec<usize>),
}

impl std::str::FromStr for OrderingStrategy {
    type Err = NvarError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" => Ok(Self::Identity),
            "longitude" | "x" => Ok(Self::Longitude),
            "latitude" | "y" => Ok(Self::Latitude),
            "pca1" => Ok(Self::Pca1),
            "pca2" => Ok(Self::Pca2),
            other => {
                let perm = other
                    .split(',')
                    .map(|t| t.trim().parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| {
                        NvarError::invalid(format!(
                            "unknown ordering '{s}' (expected identity, longitude, latitude, pca1, pca2 or a comma-separated permutation)"
                        ))
                    })?;
                Ok(Self::Custom(perm))
            }
        }
    }
}

/// Unit principal axes of the centred 2-D coordinates, largest variance
/// first. Each axis is signed so its first non-zero component is positive.
pub fn principal_axes(layout: &SensorLayout) -> Result<([f64; 2], [f64; 2])> {
    let coords = planar_coordinates(layout)?;
    let n = coords.len() as f64;
    let (mx, my) = coords
        .iter()
        .fold((0.0, 0.0), |(a, b), c| (a + c[0] / n, b + c[1] / n));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for c in coords {
        let (dx, dy) = (c[0] - mx, c[1] - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    // closed-form eigenvector of [[sxx, sxy], [sxy, syy]]
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let first = orient([theta.cos(), theta.sin()]);
    let second = orient([-first[1], first[0]]);
    Ok((first, second))
}

fn orient(v: [f64; 2]) -> [f64; 2] {
    let lead = if v[0].abs() > 1e-15 { v[0] } else { v[1] };
    if lead < 0.0 {
        [-v[0], -v[1]]
    } else {
        v
    }
}

fn planar_coordinates(layout: &SensorLayout) -> Result<&[Vec<f64>]> {
    match &layout.coordinates {
        Some(c) if layout.dimension() == Some(2) => Ok(c),
        _ => Err(NvarError::MissingCoordinates),
    }
}

fn sort_by_key(keys: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    // stable sort: ties keep the original index order
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    order
}

/// Returns `order` with `order[k]` = original index of the series placed at
/// position `k`.
pub fn order_series(layout: &SensorLayout, strategy: &OrderingStrategy) -> Result<Vec<usize>> {
    let p = layout.p();
    match strategy {
        OrderingStrategy::Identity => Ok((0..p).collect()),
        OrderingStrategy::Custom(perm) => {
            if perm.len() != p {
                return Err(NvarError::InvalidPermutation(format!(
                    "length {} for {p} series",
                    perm.len()
                )));
            }
            let mut seen = vec![false; p];
            for &k in perm {
                if k >= p || std::mem::replace(&mut seen[k], true) {
                    return Err(NvarError::InvalidPermutation(format!(
                        "index {k} is out of range or repeated"
                    )));
                }
            }
            Ok(perm.clone())
        }
        OrderingStrategy::Longitude | OrderingStrategy::Latitude => {
            let coords = planar_coordinates(layout)?;
            let axis = usize::from(*strategy == OrderingStrategy::Latitude);
            let keys: Vec<f64> = coords.iter().map(|c| c[axis]).collect();
            Ok(sort_by_key(&keys))
        }
        OrderingStrategy::Pca1 | OrderingStrategy::Pca2 => {
            let coords = planar_coordinates(layout)?;
            let (first, second) = principal_axes(layout)?;
            let axis = if *strategy == OrderingStrategy::Pca1 {
                first
            } else {
                second
            };
            let keys: Vec<f64> = coords
                .iter()
                .map(|c| c[0] * axis[0] + c[1] * axis[1])
                .collect();
            Ok(sort_by_key(&keys))
        }
    }
}

fn inverse(order: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; order.len()];
    for (k, &i) in order.iter().enumerate() {
        inv[i] = k;
    }
    inv
}

/// Banded VAR: order the series, treat positions as a 1-D lattice, run the
/// neighborhood search with integer bandwidths, and map everything back to
/// the original labelling.
pub fn fit_bvar(
    panel: &SeriesPanel,
    layout: &SensorLayout,
    strategy: &OrderingStrategy,
    q_grid: &[usize],
    bandwidth_grid: &[usize],
    c_n: f64,
) -> Result<(NvarModel, FitReport)> {
    let p = panel.p();
    if layout.p() != p {
        return Err(NvarError::ShapeMismatch(format!(
            "layout has {} series, panel has {p}",
            layout.p()
        )));
    }
    let order = order_series(layout, strategy)?;
    let inv = inverse(&order);
    let radii: Vec<f64> = bandwidth_grid.iter().map(|&b| b as f64).collect();
    let band = lattice1d_distances(p);
    let (_, rep) = fit_nvar(&panel.permuted(&order), &band, q_grid, &radii, c_n)?;

    let mut per_series_radius = vec![0.0; p];
    for (k, &r) in rep.per_series_radius.iter().enumerate() {
        per_series_radius[order[k]] = r;
    }
    let bic_table = rep
        .bic_table
        .iter()
        .map(|row| (0..p).map(|i| row[inv[i]]).collect())
        .collect();
    let skipped = rep
        .skipped
        .iter()
        .map(|c| SkippedCell {
            series: order[c.series],
            ..c.clone()
        })
        .collect();
    let mut row_fits: Vec<_> = rep
        .row_fits
        .iter()
        .map(|fit| {
            let tau = fit.tau;
            let mut cols: Vec<(usize, usize)> = fit
                .members
                .iter()
                .enumerate()
                .map(|(m, &j)| (order[j], m))
                .collect();
            cols.sort_unstable();
            let q = fit.q();
            let mut beta = Vec::with_capacity(fit.beta.len());
            for r in 0..q {
                beta.extend(cols.iter().map(|&(_, m)| fit.beta[r * tau + m]));
            }
            crate::estimation::RowFit {
                series: order[fit.series],
                members: cols.iter().map(|&(j, _)| j).collect(),
                beta,
                ..fit.clone()
            }
        })
        .collect::<Vec<_>>();
    row_fits.sort_by_key(|f| f.series);
    let coeffs: Vec<DenseMatrix> = rep
        .coeffs
        .iter()
        .map(|a| {
            let mut out = DenseMatrix::zeros(p, p);
            for x in 0..p {
                for y in 0..p {
                    out[(order[x], order[y])] = a[(x, y)];
                }
            }
            out
        })
        .collect();

    let distance = band.permuted(&inv);
    let model = NvarModel::new(coeffs.clone(), rep.d_hat, distance)?;
    let report = FitReport {
        per_series_radius,
        bic_table,
        skipped,
        row_fits,
        coeffs,
        ..rep
    };
    Ok((model, report))
}

/// Lasso penalty grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaGrid {
    /// `count` log-spaced values from the null threshold λ_max of each row
    /// down to `min_ratio · λ_max`.
    Auto { count: usize, min_ratio: f64 },
    /// Fixed, strictly descending, positive.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaSelection {
    Bic,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub lambda_grid: LambdaGrid,
    pub max_iter: usize,
    pub tol: f64,
    pub selection: LambdaSelection,
    /// BIC penalty multiplier; `None` uses the estimator default for n.
    #[serde(default)]
    pub c_n: Option<f64>,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            lambda_grid: LambdaGrid::Auto {
                count: 50,
                min_ratio: 1e-3,
            },
            max_iter: 10_000,
            tol: 1e-7,
            selection: LambdaSelection::Bic,
            c_n: None,
        }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        match &self.lambda_grid {
            LambdaGrid::Auto { count, min_ratio } => {
                if *count == 0 || !(*min_ratio > 0.0 && *min_ratio < 1.0) {
                    return Err(NvarError::invalid(
                        "auto lambda grid needs count ≥ 1 and 0 < min_ratio < 1",
                    ));
                }
            }
            LambdaGrid::Explicit(grid) => {
                if grid.is_empty()
                    || grid.iter().any(|l| !(*l > 0.0 && l.is_finite()))
                    || grid.windows(2).any(|w| w[0] <= w[1])
                {
                    return Err(NvarError::invalid(
                        "lambda grid must be non-empty, positive and strictly descending",
                    ));
                }
            }
        }
        if let LambdaSelection::Fixed(l) = self.selection {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(NvarError::invalid("fixed lambda must be ≥ 0"));
            }
        }
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(NvarError::invalid("max_iter and tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    /// Coefficients on the original column scale.
    pub beta: Vec<f64>,
    /// Coordinate-descent sweeps used.
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each sweep, on the standardised scale.
    pub objective_trace: Vec<f64>,
}

/// Standardised Gram matrix of a design, reusable across responses and
/// penalties. Column `j` is scaled by `1 / sqrt(Σ x_j² / n)`; all-zero
/// columns are frozen at zero.
pub struct LassoProblem<'a> {
    x: &'a DenseMatrix,
    scales: Vec<f64>,
    gram: Vec<f64>,
}

/// Solution state on the standardised scale.
#[derive(Debug, Clone)]
struct CdState {
    beta: Vec<f64>,
    /// `c − G β`
    grad: Vec<f64>,
}

impl<'a> LassoProblem<'a> {
    pub fn new(x: &'a DenseMatrix) -> Self {
        let (n, k) = (x.rows(), x.cols());
        let nf = n.max(1) as f64;
        let scales: Vec<f64> = (0..k)
            .map(|j| {
                let ss: f64 = (0..n).map(|t| x[(t, j)] * x[(t, j)]).sum();
                (ss / nf).sqrt()
            })
            .collect();
        let mut gram = vec![0.0; k * k];
        for t in 0..n {
            let row = x.row(t);
            for a in 0..k {
                if scales[a] == 0.0 || row[a] == 0.0 {
                    continue;
                }
                let va = row[a] / scales[a];
                for b in a..k {
                    if scales[b] != 0.0 {
                        gram[a * k + b] += va * row[b] / scales[b];
                    }
                }
            }
        }
        for a in 0..k {
            for b in a..k {
                let v = gram[a * k + b] / nf;
                gram[a * k + b] = v;
                gram[b * k + a] = v;
            }
        }
        LassoProblem { x, scales, gram }
    }

    fn k(&self) -> usize {
        self.scales.len()
    }

    /// `X̃ᵀy / n`.
    fn correlations(&self, y: &[f64]) -> Vec<f64> {
        let nf = self.x.rows().max(1) as f64;
        self.x
            .tr_mul_vec(y)
            .iter()
            .zip(&self.scales)
            .map(|(v, s)| if *s == 0.0 { 0.0 } else { v / (s * nf) })
            .collect()
    }

    /// Smallest penalty at which the solution is identically zero.
    pub fn lambda_max(&self, y: &[f64]) -> f64 {
        self.correlations(y).iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    fn objective(&self, yy_over_2n: f64, corr: &[f64], st: &CdState, lambda: f64) -> f64 {
        // ½yᵀy/n − cᵀβ + ½βᵀGβ + λ‖β‖₁ with Gβ = c − grad
        let mut obj = yy_over_2n;
        for j in 0..self.k() {
            let b = st.beta[j];
            if b != 0.0 {
                obj += -corr[j] * b + 0.5 * b * (corr[j] - st.grad[j]) + lambda * b.abs();
            }
        }
        obj
    }

    fn update(&self, st: &mut CdState, j: usize, lambda: f64) -> f64 {
        let gjj = self.gram[j * self.k() + j];
        if gjj == 0.0 {
            return 0.0;
        }
        let old = st.beta[j];
        let rho = st.grad[j] + gjj * old;
        let new = soft_threshold(rho, lambda) / gjj;
        let delta = new - old;
        if delta != 0.0 {
            st.beta[j] = new;
            let k = self.k();
            let col = &self.gram[j * k..(j + 1) * k];
            for (g, gj) in st.grad.iter_mut().zip(col) {
                *g -= gj * delta;
            }
        }
        delta.abs()
    }

    fn descend(
        &self,
        corr: &[f64],
        yy_over_2n: f64,
        st: &mut CdState,
        lambda: f64,
        cfg: &LassoConfig,
    ) -> (usize, bool, Vec<f64>) {
        let k = self.k();
        let mut trace = Vec::new();
        let mut sweeps = 0;
        while sweeps < cfg.max_iter {
            // full sweep
            let mut max_change = 0.0_f64;
            for j in 0..k {
                max_change = max_change.max(self.update(st, j, lambda));
            }
            sweeps += 1;
            trace.push(self.objective(yy_over_2n, corr, st, lambda));
            if max_change < cfg.tol {
                return (sweeps, true, trace);
            }
            // iterate on the active set until it settles
            let active: Vec<usize> = (0..k).filter(|&j| st.beta[j] != 0.0).collect();
            while sweeps < cfg.max_iter {
                let mut change = 0.0_f64;
                for &j in &active {
                    change = change.max(self.update(st, j, lambda));
                }
                sweeps += 1;
                trace.push(self.objective(yy_over_2n, corr, st, lambda));
                if change < cfg.tol {
                    break;
                }
            }
        }
        (sweeps, false, trace)
    }

    fn unstandardise(&self, beta: &[f64]) -> Vec<f64> {
        beta.iter()
            .zip(&self.scales)
            .map(|(b, s)| if *s == 0.0 { 0.0 } else { b / s })
            .collect()
    }

    /// Solve along a descending penalty path with warm starts.
    pub fn path(&self, y: &[f64], lambdas: &[f64], cfg: &LassoConfig) -> Vec<LassoFit> {
        let corr = self.correlations(y);
        let nf = self.x.rows().max(1) as f64;
        let yy_over_2n = y.iter().map(|v| v * v).sum::<f64>() / (2.0 * nf);
        let mut st = CdState {
            beta: vec![0.0; self.k()],
            grad: corr.clone(),
        };
        lambdas
            .iter()
            .map(|&lambda| {
                let (iterations, converged, objective_trace) =
                    self.descend(&corr, yy_over_2n, &mut st, lambda, cfg);
                LassoFit {
                    beta: self.unstandardise(&st.beta),
                    iterations,
                    converged,
                    objective_trace,
                }
            })
            .collect()
    }
}

pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Minimise `(1/2n)‖y − Xβ‖² + λ‖β‖₁` over standardised columns by cyclic
/// coordinate descent, returning coefficients on the original scale.
pub fn lasso_row(x: &DenseMatrix, y: &[f64], lambda: f64, config: &LassoConfig) -> Result<LassoFit> {
    if y.len() != x.rows() {
        return Err(NvarError::ShapeMismatch(format!(
            "design has {} rows, response {}",
            x.rows(),
            y.len()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(NvarError::invalid("lambda must be ≥ 0"));
    }
    let problem = LassoProblem::new(x);
    Ok(problem.path(y, &[lambda], config).remove(0))
}

/// One point on a row's lasso path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPathPoint {
    pub series: usize,
    pub lambda: f64,
    pub nonzeros: usize,
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoReport {
    pub q: usize,
    pub c_n: f64,
    pub lambdas: Vec<f64>,
    pub nonzeros: Vec<usize>,
    pub not_converged: usize,
    pub path: Vec<LassoPathPoint>,
}

fn auto_grid(lambda_max: f64, count: usize, min_ratio: f64) -> Vec<f64> {
    if count == 1 {
        return vec![lambda_max];
    }
    let ln_ratio = min_ratio.ln();
    (0..count)
        .map(|k| lambda_max * (ln_ratio * k as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Lags `1..=q` of every series, rows descending in time. Unlike the OLS
/// design this may have more columns than rows.
fn full_design(panel: &SeriesPanel, q: usize) -> Result<DenseMatrix> {
    let (p, n) = (panel.p(), panel.n());
    if q == 0 {
        return Err(NvarError::invalid("lag order must be at least 1"));
    }
    if n <= q {
        return Err(NvarError::InsufficientData {
            needed: q + 1,
            available: n,
        });
    }
    let mut values = Vec::with_capacity((n - q) * q * p);
    for t in (q..n).rev() {
        for r in 1..=q {
            values.extend((0..p).map(|j| panel.get(j, t - r)));
        }
    }
    DenseMatrix::from_row_major(n - q, q * p, values)
}

/// Per-series lasso on all p series at lags 1..=q; the penalty of each row is
/// picked by BIC with the non-zero count as degrees of freedom, or fixed.
pub fn fit_lasso(
    panel: &SeriesPanel,
    q: usize,
    config: &LassoConfig,
) -> Result<(NvarModel, LassoReport)> {
    config.validate()?;
    let (p, n) = (panel.p(), panel.n());
    // the lagged design is the same for every row
    let x = full_design(panel, q)?;
    let problem = LassoProblem::new(&x);
    let c_n = config.c_n.unwrap_or_else(|| default_cn(n));

    let rows: Vec<Result<(Vec<f64>, f64, usize, bool, Vec<LassoPathPoint>)>> =
        map_indices(p, |i| {
            let y: Vec<f64> = (q..n).rev().map(|t| panel.get(i, t)).collect();
            let lambda_max = problem.lambda_max(&y);
            let grid = match (&config.selection, &config.lambda_grid) {
                (LambdaSelection::Fixed(l), _) => vec![*l],
                (_, LambdaGrid::Explicit(g)) => g.clone(),
                (_, LambdaGrid::Auto { count, min_ratio }) => {
                    if lambda_max == 0.0 {
                        vec![0.0]
                    } else {
                        auto_grid(lambda_max, *count, *min_ratio)
                    }
                }
            };
            let fits = problem.path(&y, &grid, config);
            let mut best: Option<(usize, f64)> = None;
            let mut path = Vec::with_capacity(grid.len());
            for (g, fit) in fits.iter().enumerate() {
                let nz = fit.beta.iter().filter(|b| **b != 0.0).count();
                let rss: f64 = x
                    .mul_vec(&fit.beta)
                    .iter()
                    .zip(&y)
                    .map(|(f, y)| (y - f) * (y - f))
                    .sum();
                let b = match bic_for_params(rss, n, nz, p, c_n) {
                    Err(NvarError::ZeroRss) => ZERO_RSS_BIC,
                    other => other?,
                };
                path.push(LassoPathPoint {
                    series: i,
                    lambda: grid[g],
                    nonzeros: nz,
                    bic: b,
                });
                if best.is_none_or(|(_, bb)| b < bb) {
                    best = Some((g, b));
                }
            }
            let (g, _) = best.expect("grid is non-empty");
            let fit = &fits[g];
            let nz = fit.beta.iter().filter(|b| **b != 0.0).count();
            Ok((fit.beta.clone(), grid[g], nz, fit.converged, path))
        });

    let mut coeffs = vec![DenseMatrix::zeros(p, p); q];
    let mut lambdas = Vec::with_capacity(p);
    let mut nonzeros = Vec::with_capacity(p);
    let mut not_converged = 0;
    let mut path = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        let (beta, lambda, nz, converged, pts) = row?;
        for (r, a) in coeffs.iter_mut().enumerate() {
            for j in 0..p {
                a[(i, j)] = beta[r * p + j];
            }
        }
        lambdas.push(lambda);
        nonzeros.push(nz);
        not_converged += usize::from(!converged);
        path.extend(pts);
    }
    let model = NvarModel::new(coeffs, 1.0, DistanceMatrix::complete(p))?;
    Ok((
        model,
        LassoReport {
            q,
            c_n,
            lambdas,
            nonzeros,
            not_converged,
            path,
        },
    ))
}
