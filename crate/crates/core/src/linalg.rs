//! Dense row-major matrices and the handful of kernels the estimator needs:
//! Householder least squares, power-iteration spectral norm, and a
//! stationarity bound built from powers of a matrix.

use serde::{Deserialize, Serialize};

use crate::error::{NvarError, Result};

/// Relative threshold on the diagonal of R below which a design is rejected.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Row-major dense matrix with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl TryFrom<RawMatrix> for DenseMatrix {
    type Error = NvarError;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        DenseMatrix::from_row_major(raw.rows, raw.cols, raw.values)
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(NvarError::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NvarError::invalid("matrix entries must be finite"));
        }
        Ok(DenseMatrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NvarError::ShapeMismatch("ragged rows".into()));
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i|self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, factor: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(NvarError::ShapeMismatch(format!(
                "{}x{} minus {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(NvarError::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.values[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `selfᵀ * x`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.values[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.values[i * self.cols + j]
    }
}

/// Solve `min ‖y − Xβ‖²` by Householder QR.
///
/// Fails with [`NvarError::RankDeficient`] when the smallest diagonal entry of
/// R falls below [`RANK_TOLERANCE`] times the largest.
pub fn least_squares_solve(x: &DenseMatrix, y: &[f64]) -> Result<Vec<f64>> {
    let (n, k) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(NvarError::ShapeMismatch(format!(
            "design has {n} rows but response has {}",
            y.len()
        )));
    }
    if n < k {
        return Err(NvarError::InsufficientData {
            needed: k,
            available: n,
        });
    }
    if k == 0 {
        return Ok(Vec::new());
    }

    // Column-major working copy; Householder vectors overwrite the lower part.
    let mut a: Vec<Vec<f64>> = (0..k).map(|j| x.column(j)).collect();
    let mut rhs = y.to_vec();
    let mut diag = vec![0.0; k];

    for j in 0..k {
        let norm = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            diag[j] = 0.0;
            continue;
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        // v = x - alpha e1, stored in place
        a[j][j] -= alpha;
        let vnorm2: f64 = a[j][j..].iter().map(|v| v * v).sum();
        diag[j] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        let (head, tail) = a.split_at_mut(j + 1);
        let v = &head[j][j..];
        for col in tail.iter_mut() {
            let dot: f64 = v.iter().zip(&col[j..]).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in col[j..].iter_mut().zip(v) {
                *c -= f * vi;
            }
        }
        let dot: f64 = v.iter().zip(&rhs[j..]).map(|(a, b)| a * b).sum();
        let f = 2.0 * dot / vnorm2;
        for (r, vi) in rhs[j..].iter_mut().zip(v) {
            *r -= f * vi;
        }
    }

    let largest = diag.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    let smallest = diag.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
    if largest == 0.0 || smallest < RANK_TOLERANCE * largest {
        let ratio = if largest == 0.0 { 0.0 } else { smallest / largest };
        return Err(NvarError::RankDeficient { ratio });
    }

    // Back substitution on R β = Qᵀy; R's strict upper part lives in a[col][row].
    let mut beta = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = rhs[i];
        for j in i + 1..k {
            s -= a[j][i] * beta[j];
        }
        beta[i] = s / diag[i];
    }
    Ok(beta)
}

pub fn frobenius_norm(a: &DenseMatrix) -> f64 {
    a.values().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Outcome of a power iteration run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const POWER_TOLERANCE: f64 = 1e-12;
pub const POWER_MAX_ITER: usize = 10_000;

/// Largest singular value via power iteration on AᵀA.
///
/// The start vector is the normalised all-ones vector. If it lies in the null
/// space of A (so the iterate collapses to zero while A is non-zero) the start
/// is perturbed with a fixed sequence and the iteration restarts.
pub fn power_iteration(a: &DenseMatrix) -> PowerIteration {
    let k = a.cols();
    if a.max_abs() == 0.0 || k == 0 {
        return PowerIteration {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }

    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut prev = 0.0;
    let mut best = 0.0_f64;
    let mut restarts = 0;
    for it in 1..=POWER_MAX_ITER {
        let av = a.mul_vec(&v);
        let rayleigh = av.iter().map(|x| x * x).sum::<f64>();
        let w = a.tr_mul_vec(&av);
        let wnorm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if wnorm == 0.0 {
            // stagnation: start vector orthogonal to the row space
            restarts += 1;
            v = perturbed_start(k, restarts);
            prev = 0.0;
            continue;
        }
        let sigma = rayleigh.sqrt();
        best = best.max(sigma);
        if prev > 0.0 && (sigma - prev).abs() <= POWER_TOLERANCE * sigma {
            return PowerIteration {
                value: sigma.max(best),
                iterations: it,
                converged: true,
            };
        }
        prev = sigma;
        v = w.into_iter().map(|x| x / wnorm).collect();
    }
    PowerIteration {
        value: best,
        iterations: POWER_MAX_ITER,
        converged: false,
    }
}

fn perturbed_start(k: usize, attempt: usize) -> Vec<f64> {
    // Weyl sequence; deterministic and never orthogonal to a fixed subspace
    // for more than a few attempts.
    let phi = 0.618_033_988_749_894_9_f64;
    let v: Vec<f64> = (0..k)
        .map(|i| ((i + 1) as f64 * phi * attempt as f64).fract() - 0.5)
        .collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Largest singular value; see [`power_iteration`] for the convergence flag.
pub fn spectral_norm(a: &DenseMatrix) -> f64 {
    power_iteration(a).value
}

/// Powers at which ‖Aᵐ‖^(1/m) is evaluated.
pub const STATIONARITY_POWERS: [u32; 6] = [1, 2, 4, 8, 16, 32];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityMargin {
    pub is_stationary: bool,
    /// Upper bound on the spectral radius.
    pub bound: f64,
}

/// Bound the spectral radius by `min_m ‖Aᵐ‖₂^(1/m)` over m ∈ {1, 2, 4, …, 32}.
pub fn stationarity_margin(a: &DenseMatrix) -> Result<StationarityMargin> {
    stationarity_scan(a, false)
}

/// Same test as [`stationarity_margin`] but stops at the first power whose
/// bound is below one; `bound` is then that power's value, not the minimum.
pub(crate) fn is_stationary(a: &DenseMatrix) -> Result<StationarityMargin> {
    stationarity_scan(a, true)
}

fn stationarity_scan(a: &DenseMatrix, early_exit: bool) -> Result<StationarityMargin> {
    if !a.is_square() {
        return Err(NvarError::ShapeMismatch(format!(
            "stationarity check needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let mut power = a.clone();
    let mut bound = f64::INFINITY;
    let mut m = 1;
    for &target in &STATIONARITY_POWERS {
        while m < target {
            power = power.matmul(&power)?;
            m *= 2;
        }
        let b = spectral_norm(&power).powf(1.0 / f64::from(m));
        bound = bound.min(b);
        if early_exit && bound < 1.0 {
            break;
        }
    }
    Ok(StationarityMargin {
        is_stationary: bound < 1.0,
        bound,
    })
}
