//! NVAR(q) models, observation panels, forward simulation and the three
//! random-model generators used by the Monte Carlo harness.
//!
//! Randomness comes from ChaCha8 seeded with [`SeedableRng::seed_from_u64`].
//! Distinct purposes draw from distinct ChaCha streams of the same seed
//! ([`MODEL_STREAM`] for coefficients and point layouts, [`NOISE_STREAM`] for
//! innovations), so a model and its simulated panel can share one seed.
//! Gaussian draws use the ziggurat sampler from `rand_distr`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{NvarError, Result};
use crate::geometry::{
    default_ids, euclidean_distances, lattice1d_distances, lattice2d_distances, neighborhood,
    DistanceMatrix, DistanceScale, SensorLayout,
};
use crate::linalg::{is_stationary, spectral_norm, DenseMatrix};

pub const MODEL_STREAM: u64 = 0;
pub const NOISE_STREAM: u64 = 1;

pub const DEFAULT_BURN_IN: usize = 200;

/// Range of the spectral norm drawn for generated coefficient matrices.
pub const NORM_RANGE: (f64, f64) = (0.3, 0.9);

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// p series observed at n time points.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPanel {
    ids: Vec<String>,
    n: usize,
    /// series-major: `values[i * n + t]`
    values: Vec<f64>,
    timestamps: Option<Vec<String>>,
}

impl SeriesPanel {
    pub fn from_series(ids: Vec<String>, series: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != series.len() {
            return Err(NvarError::ShapeMismatch(format!(
                "{} ids for {} series",
                ids.len(),
                series.len()
            )));
        }
        let n = series.first().map_or(0, Vec::len);
        if series.iter().any(|s| s.len() != n) {
            return Err(NvarError::ShapeMismatch("series differ in length".into()));
        }
        let values = series.concat();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NvarError::invalid("panel values must be finite"));
        }
        Ok(SeriesPanel {
            ids,
            n,
            values,
            timestamps: None,
        })
    }

    pub fn with_timestamps(mut self, timestamps: Vec<String>) -> Result<Self> {
        if timestamps.len() != self.n {
            return Err(NvarError::ShapeMismatch(format!(
                "{} timestamps for {} time points",
                timestamps.len(),
                self.n
            )));
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.ids.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }

    pub fn series(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, t: usize) -> f64 {
        self.values[i * self.n + t]
    }

    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..self.p()).map(|i| self.get(i, t)).collect()
    }

    /// Columns `[start, end)`.
    pub fn slice_time(&self, start: usize, end: usize) -> SeriesPanel {
        let len = end - start;
        let mut values = Vec::with_capacity(self.p() * len);
        for i in 0..self.p() {
            values.extend_from_slice(&self.series(i)[start..end]);
        }
        SeriesPanel {
            ids: self.ids.clone(),
            n: len,
            values,
            timestamps: self.timestamps.as_ref().map(|ts| ts[start..end].to_vec()),
        }
    }

    /// Row `k` of the result is series `order[k]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> SeriesPanel {
        let mut values = Vec::with_capacity(self.values.len());
        for &i in order {
            values.extend_from_slice(self.series(i));
        }
        SeriesPanel {
            ids: order.iter().map(|&i| self.ids[i].clone()).collect(),
            n: self.n,
            values,
            timestamps: self.timestamps.clone(),
        }
    }

    pub fn map_values(&self, mut f: impl FnMut(usize, f64) -> f64) -> SeriesPanel {
        let n = self.n;
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| f(k / n.max(1), v))
            .collect();
        SeriesPanel {
            values,
            ..self.clone()
        }
    }
}

/// Isotropic Gaussian innovations with standard deviation `sigma_e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_e: f64,
}

impl NoiseSpec {
    pub fn new(sigma_e: f64) -> Result<Self> {
        if !(sigma_e > 0.0 && sigma_e.is_finite()) {
            return Err(NvarError::invalid(format!(
                "noise standard deviation must be positive and finite, got {sigma_e}"
            )));
        }
        Ok(NoiseSpec { sigma_e })
    }
}

/// `y(t) = A₁y(t−1) + … + A_q y(t−q) + e(t)` with `A_s(i, j) = 0` whenever
/// `d(i, j) > radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct NvarModel {
    p: usize,
    q: usize,
    radius: f64,
    distance: DistanceMatrix,
    coeffs: Vec<DenseMatrix>,
    /// Estimator that produced the model, when it was fitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_seconds: Option<f64>,
}

#[derive(Deserialize)]
struct RawModel {
    p: usize,
    q: usize,
    radius: f64,
    distance: DistanceMatrix,
    coeffs: Vec<DenseMatrix>,
    #[serde(default)]
    method: Option<String>,
    #[serde(default)]
    fit_seconds: Option<f64>,
}

impl TryFrom<RawModel> for NvarModel {
    type Error = NvarError;

    fn try_from(raw: RawModel) -> Result<Self> {
        let mut model = NvarModel::new(raw.coeffs, raw.radius, raw.distance)?;
        if model.p != raw.p || model.q != raw.q {
            return Err(NvarError::ShapeMismatch(format!(
                "declared p={}, q={} but coefficients give p={}, q={}",
                raw.p, raw.q, model.p, model.q
            )));
        }
        model.method = raw.method;
        model.fit_seconds = raw.fit_seconds;
        Ok(model)
    }
}

impl NvarModel {
    /// Validates shapes and the neighborhood sparsity pattern.
    pub fn new(coeffs: Vec<DenseMatrix>, radius: f64, distance: DistanceMatrix) -> Result<Self> {
        let p = distance.p();
        let q = coeffs.len();
        if q == 0 {
            return Err(NvarError::invalid("lag order must be at least 1"));
        }
        if radius.is_nan() || radius < 0.0 {
            return Err(NvarError::invalid(format!("radius must be ≥ 0, got {radius}")));
        }
        for (lag, a) in coeffs.iter().enumerate() {
            if a.rows() != p || a.cols() != p {
                return Err(NvarError::ShapeMismatch(format!(
                    "lag {} matrix is {}x{}, expected {p}x{p}",
                    lag + 1,
                    a.rows(),
                    a.cols()
                )));
            }
            for i in 0..p {
                for j in 0..p {
                    if a[(i, j)] != 0.0 && distance.get(i, j) > radius {
                        return Err(NvarError::invalid(format!(
                            "lag {} coefficient ({i},{j}) is non-zero outside the radius-{radius} neighborhood",
                            lag + 1
                        )));
                    }
                }
            }
        }
        Ok(NvarModel {
            p,
            q,
            radius,
            distance,
            coeffs,
            method: None,
            fit_seconds: None,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn distance(&self) -> &DistanceMatrix {
        &self.distance
    }

    pub fn coeffs(&self) -> &[DenseMatrix] {
        &self.coeffs
    }

    pub fn with_method(mut self, method: impl Into<String>, seconds: f64) -> Self {
        self.method = Some(method.into());
        self.fit_seconds = Some(seconds);
        self
    }
}

/// Stack an NVAR(q) into its order-one form: `[A₁ … A_q]` on top, identity
/// blocks on the first block subdiagonal.
pub fn companion_form(model: &NvarModel) -> DenseMatrix {
    let (p, q) = (model.p, model.q);
    let mut out = DenseMatrix::zeros(p * q, p * q);
    for (lag, a) in model.coeffs.iter().enumerate() {
        for i in 0..p {
            for j in 0..p {
                out[(i, lag * p + j)] = a[(i, j)];
            }
        }
    }
    for block in 1..q {
        for i in 0..p {
            out[(block * p + i, (block - 1) * p + i)] = 1.0;
        }
    }
    out
}

fn sparse_rows(a: &DenseMatrix) -> Vec<Vec<(usize, f64)>> {
    (0..a.rows())
        .map(|i| {
            a.row(i)
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(j, &v)| (j, v))
                .collect()
        })
        .collect()
}

/// Iterate the model from a zero state for `burn_in + n` steps and keep the
/// last `n` columns. Innovations are drawn time-major, series 0..p within a
/// step, from [`NOISE_STREAM`] of `seed`.
pub fn simulate(
    model: &NvarModel,
    noise: NoiseSpec,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<SeriesPanel> {
    if n == 0 {
        return Err(NvarError::invalid("n must be at least 1"));
    }
    let margin = is_stationary(&companion_form(model))?;
    if !margin.is_stationary {
        return Err(NvarError::NonStationaryModel {
            bound: margin.bound,
        });
    }
    simulate_unchecked(model, noise, n, burn_in, seed)
}

pub(crate) fn simulate_unchecked(
    model: &NvarModel,
    noise: NoiseSpec,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<SeriesPanel> {
    let p = model.p;
    let lags: Vec<_> = model.coeffs.iter().map(sparse_rows).collect();
    let total = burn_in + n;
    let mut rng = rng_for(seed, NOISE_STREAM);
    // time-major history buffer
    let mut path = vec![0.0; total * p];
    for t in 0..total {
        for i in 0..p {
            let mut v = 0.0;
            for (r, rows) in lags.iter().enumerate() {
                let Some(past) = t.checked_sub(r + 1) else {
                    break;
                };
                let prev = &path[past * p..(past + 1) * p];
                for &(j, a) in &rows[i] {
                    v += a * prev[j];
                }
            }
            let e: f64 = rng.sample(StandardNormal);
            path[t * p + i] = v + noise.sigma_e * e;
        }
    }
    let series = (0..p)
        .map(|i| (burn_in..total).map(|t| path[t * p + i]).collect())
        .collect();
    SeriesPanel::from_series(default_ids(p), series)
}

/// Fill the radius-`radius` support of `distance` with Uniform[−1, 1] entries
/// (row-major order), then rescale to spectral norm u ~ Uniform[0.3, 0.9].
pub fn generate_on_support(distance: DistanceMatrix, radius: f64, seed: u64) -> Result<NvarModel> {
    let mut rng = rng_for(seed, MODEL_STREAM);
    random_on_support(distance, radius, &mut rng)
}

fn random_on_support(
    distance: DistanceMatrix,
    radius: f64,
    rng: &mut ChaCha8Rng,
) -> Result<NvarModel> {
    let p = distance.p();
    let nb = neighborhood(&distance, radius);
    let mut a = DenseMatrix::zeros(p, p);
    for (i, members) in nb.members.iter().enumerate() {
        for &j in members {
            a[(i, j)] = rng.random_range(-1.0..=1.0);
        }
    }
    let u = rng.random_range(NORM_RANGE.0..=NORM_RANGE.1);
    let norm = spectral_norm(&a);
    if norm > 0.0 {
        a = a.scale(u / norm);
    }
    NvarModel::new(vec![a], radius, distance)
}

/// Banded coefficients on a 1-D lattice: support `|i − j| ≤ d0`.
pub fn generate_case1(p: usize, d0: usize, seed: u64) -> Result<NvarModel> {
    if p == 0 {
        return Err(NvarError::invalid("p must be at least 1"));
    }
    generate_on_support(lattice1d_distances(p), d0 as f64, seed)
}

/// Block-banded coefficients on a `side × side` lattice with city-block
/// neighborhoods of radius `d0`.
pub fn generate_case2(side: usize, d0: usize, seed: u64) -> Result<NvarModel> {
    if side == 0 {
        return Err(NvarError::invalid("lattice side must be at least 1"));
    }
    generate_on_support(lattice2d_distances(side), d0 as f64, seed)
}

/// Side of the square on which `p` uniform points have on average four other
/// points within unit distance: `p/side² · π = 4`.
pub fn case3_square_side(p: usize) -> f64 {
    (p as f64 * std::f64::consts::PI / 4.0).sqrt()
}

/// Uniform points on a square sized by [`case3_square_side`]; support is the
/// Euclidean ball of radius `d0_steps`.
pub fn generate_case3(p: usize, d0_steps: usize, seed: u64) -> Result<(SensorLayout, NvarModel)> {
    if p < 2 {
        return Err(NvarError::invalid("case 3 needs at least 2 points"));
    }
    let mut rng = rng_for(seed, MODEL_STREAM);
    let side = case3_square_side(p);
    let coords: Vec<Vec<f64>> = (0..p)
        .map(|_| {
            let x = rng.random_range(0.0..side);
            let y = rng.random_range(0.0..side);
            vec![x, y]
        })
        .collect();
    let layout = SensorLayout::with_coordinates(default_ids(p), coords)?;
    let distance = euclidean_distances(&layout, DistanceScale::Fixed(1.0))?;
    let model = random_on_support(distance, d0_steps as f64, &mut rng)?;
    Ok((layout, model))
}
