//! Error metrics, one-step forecast evaluation and the Monte Carlo harness.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::baselines::{fit_bvar, fit_lasso, LassoConfig, OrderingStrategy};
use crate::error::{NvarError, Result};
use crate::estimation::{default_cn, fit_nvar, predict_at};
use crate::geometry::{lattice1d_distances, lattice2d_distances, SensorLayout};
use crate::linalg::{frobenius_norm, spectral_norm};
use crate::model::{
    generate_case1, generate_case2, generate_case3, simulate, NoiseSpec, NvarModel, SeriesPanel,
    DEFAULT_BURN_IN,
};
use crate::par::map_indices;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientErrors {
    /// Spectral norm of `Â₁ − A₁`.
    pub l2: f64,
    /// Frobenius norm of `Â₁ − A₁`.
    pub frob: f64,
    /// `(spectral, frobenius)` for every lag.
    pub per_lag: Vec<(f64, f64)>,
}

pub fn coefficient_errors(est: &NvarModel, truth: &NvarModel) -> Result<CoefficientErrors> {
    if est.p() != truth.p() || est.q() != truth.q() {
        return Err(NvarError::ShapeMismatch(format!(
            "estimate is p={} q={}, truth is p={} q={}",
            est.p(),
            est.q(),
            truth.p(),
            truth.q()
        )));
    }
    let per_lag = est
        .coeffs()
        .iter()
        .zip(truth.coeffs())
        .map(|(a, b)| {
            let diff = a.sub(b)?;
            Ok((spectral_norm(&diff), frobenius_norm(&diff)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (l2, frob) = per_lag[0];
    Ok(CoefficientErrors { l2, frob, per_lag })
}

/// Number of leading columns used for training: `⌊fraction · n⌋`.
pub fn train_length(n: usize, fraction: f64) -> usize {
    // the small nudge keeps e.g. 0.8 · 10 from landing on 7.999…
    ((fraction * n as f64) + 1e-9).floor() as usize
}

/// Mean squared one-step prediction error over the first `horizon`
/// predictable times of the test segment. The test segment is the columns
/// after the first `⌊split · n⌋`; each prediction uses the observed test
/// history, so the first `q` test columns only serve as lags.
pub fn mspe_one_step(
    model: &NvarModel,
    panel: &SeriesPanel,
    split: f64,
    horizon: usize,
) -> Result<f64> {
    if !(split > 0.0 && split < 1.0) {
        return Err(NvarError::invalid("split fraction must lie in (0, 1)"));
    }
    if model.p() != panel.p() {
        return Err(NvarError::ShapeMismatch(format!(
            "model has {} series, panel has {}",
            model.p(),
            panel.p()
        )));
    }
    if horizon == 0 {
        return Err(NvarError::invalid("horizon must be at least 1"));
    }
    let n = panel.n();
    let start = train_length(n, split);
    let q = model.q();
    let available = n - start.min(n);
    if available < horizon + q {
        return Err(NvarError::InsufficientTestSpan {
            needed: horizon + q,
            available,
        });
    }
    let test = panel.slice_time(start, n);
    mspe_on(model, &test, q, horizon)
}

/// MSPE over columns `from .. from + horizon` of `panel`.
pub fn mspe_on(model: &NvarModel, panel: &SeriesPanel, from: usize, horizon: usize) -> Result<f64> {
    let p = panel.p();
    let mut total = 0.0;
    for t in from..from + horizon {
        let pred = predict_at(model, panel, t)?;
        for (i, v) in pred.iter().enumerate() {
            let e = v - panel.get(i, t);
            total += e * e;
        }
    }
    Ok(total / (p * horizon) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nvar,
    Bvar,
    Lasso,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Nvar => "nvar",
            Method::Bvar => "bvar",
            Method::Lasso => "lasso",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = NvarError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nvar" => Ok(Method::Nvar),
            "bvar" => Ok(Method::Bvar),
            "lasso" => Ok(Method::Lasso),
            _ => Err(NvarError::invalid(format!(
                "unknown method '{s}' (expected nvar, bvar or lasso)"
            ))),
        }
    }
}

/// Simulation design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    /// Banded coefficients on a 1-D lattice.
    Lattice1d = 1,
    /// City-block neighborhoods on a square lattice.
    Lattice2d = 2,
    /// Euclidean neighborhoods of random points in the plane.
    Scattered = 3,
}

impl Case {
    pub fn number(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Case {
    type Error = NvarError;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Case::Lattice1d),
            2 => Ok(Case::Lattice2d),
            3 => Ok(Case::Scattered),
            _ => Err(NvarError::invalid(format!("case must be 1, 2 or 3, got {v}"))),
        }
    }
}

impl Serialize for Case {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.number())
    }
}

impl<'de> Deserialize<'de> for Case {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Case::try_from(v).map_err(serde::de::Error::custom)
    }
}

/// Side of the square lattice holding `p` series, if `p` is a perfect square.
pub fn lattice_side(p: usize) -> Option<usize> {
    let s = (p as f64).sqrt().round() as usize;
    (s * s == p).then_some(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub case: Case,
    pub p: usize,
    pub d0: usize,
    pub sigma: f64,
    pub n: usize,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Largest candidate radius / bandwidth; the grid is `0, 1, …, max_radius`.
    pub max_radius: usize,
    pub burn_in: usize,
    /// `None` uses the default penalty multiplier for `n`.
    pub c_n: Option<f64>,
    pub lasso: LassoConfig,
}

impl MonteCarloConfig {
    pub fn new(case: Case, p: usize, d0: usize, sigma: f64, n: usize, reps: usize) -> Self {
        MonteCarloConfig {
            case,
            p,
            d0,
            sigma,
            n,
            reps,
            methods: vec![Method::Nvar, Method::Bvar, Method::Lasso],
            seed: 0,
            max_radius: 4,
            burn_in: DEFAULT_BURN_IN,
            c_n: None,
            lasso: LassoConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(NvarError::invalid("reps must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(NvarError::invalid("no methods selected"));
        }
        NoiseSpec::new(self.sigma)?;
        if self.n < 2 {
            return Err(NvarError::invalid("n must be at least 2"));
        }
        match self.case {
            Case::Lattice2d if lattice_side(self.p).is_none() => Err(NvarError::invalid(format!(
                "p must be a perfect square for the 2-D lattice, got {}",
                self.p
            ))),
            Case::Scattered if self.p < 2 => Err(NvarError::invalid("case 3 needs p ≥ 2")),
            _ if self.p == 0 => Err(NvarError::invalid("p must be at least 1")),
            _ => self.lasso.validate(),
        }
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..=self.max_radius).map(|r| r as f64).collect()
    }
}

/// Seed of replication `rep`: the master seed plus the index, wrapping.
pub fn replication_seed(master: u64, rep: usize) -> u64 {
    master.wrapping_add(rep as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub rep: usize,
    pub method: Method,
    /// Selected radius or bandwidth; absent for lasso.
    pub d_hat: Option<f64>,
    pub l2: f64,
    pub frob: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub rep: usize,
    pub method: Method,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub case: Case,
    pub p: usize,
    pub d0: usize,
    pub sigma: f64,
    pub n: usize,
    pub method: Method,
    pub reps: usize,
    pub failures: usize,
    pub l2_mean: f64,
    /// Absent for a single successful replication.
    pub l2_sd: Option<f64>,
    pub frob_mean: f64,
    pub frob_sd: Option<f64>,
    /// `(radius, count)` for every candidate radius; empty for lasso.
    pub histogram: Vec<(f64, usize)>,
}

impl SummaryRow {
    /// Share of successful replications that selected `radius`.
    pub fn frequency(&self, radius: f64) -> f64 {
        let hits = self
            .histogram
            .iter()
            .find(|(r, _)| *r == radius)
            .map_or(0, |(_, c)| *c);
        hits as f64 / self.reps as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
    pub trials: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
}

impl SummaryTable {
    pub fn row(&self, method: Method) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn extend(&mut self, other: SummaryTable) {
        self.rows.extend(other.rows);
        self.trials.extend(other.trials);
        self.failures.extend(other.failures);
    }

    /// Trials with wall-clock times zeroed, for comparing runs.
    pub fn without_timing(&self) -> SummaryTable {
        let mut t = self.clone();
        for trial in &mut t.trials {
            trial.seconds = 0.0;
        }
        t
    }

    /// Fixed-width text table: `mean(sd)` errors and radius frequencies.
    pub fn render_text(&self) -> String {
        let max_bins = self.rows.iter().map(|r| r.histogram.len()).max().unwrap_or(0);
        let mut out = String::new();
        let _ = write!(
            out,
            "{:<4} {:>5} {:>3} {:>6} {:>5} {:<6} {:>13} {:>13}",
            "case", "p", "d0", "sigma", "n", "method", "L2", "Frobenius"
        );
        for b in 0..max_bins {
            let _ = write!(out, " {:>5}", format!("d={b}"));
        }
        let _ = writeln!(out, " {:>5}", "fail");
        for r in &self.rows {
            let _ = write!(
                out,
                "{:<4} {:>5} {:>3} {:>6} {:>5} {:<6} {:>13} {:>13}",
                r.case.number(),
                r.p,
                r.d0,
                r.sigma,
                r.n,
                r.method.name(),
                mean_sd(r.l2_mean, r.l2_sd),
                mean_sd(r.frob_mean, r.frob_sd)
            );
            for b in 0..max_bins {
                match r.histogram.get(b) {
                    Some((_, c)) => {
                        let _ = write!(out, " {c:>5}");
                    }
                    None => {
                        let _ = write!(out, " {:>5}", "-");
                    }
                }
            }
            let _ = writeln!(out, " {:>5}", r.failures);
        }
        out
    }
}

fn mean_sd(mean: f64, sd: Option<f64>) -> String {
    match sd {
        Some(sd) => format!("{mean:.2}({sd:.2})"),
        None => format!("{mean:.2}"),
    }
}

fn mean_and_sd(values: &[f64]) -> (f64, Option<f64>) {
    if values.is_empty() {
        return (f64::NAN, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

#[cfg(not(target_arch = "wasm32"))]
fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = std::time::Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

// no monotonic clock on bare wasm
#[cfg(target_arch = "wasm32")]
fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    (f(), 0.0)
}

/// Model, layout and panel for one replication.
pub fn replication_data(
    cfg: &MonteCarloConfig,
    rep: usize,
) -> Result<(NvarModel, SensorLayout, SeriesPanel)> {
    let seed = replication_seed(cfg.seed, rep);
    let (layout, truth) = match cfg.case {
        Case::Lattice1d => (SensorLayout::lattice(cfg.p), generate_case1(cfg.p, cfg.d0, seed)?),
        Case::Lattice2d => {
            let side = lattice_side(cfg.p)
                .ok_or_else(|| NvarError::invalid("p must be a perfect square"))?;
            (SensorLayout::lattice(cfg.p), generate_case2(side, cfg.d0, seed)?)
        }
        Case::Scattered => generate_case3(cfg.p, cfg.d0, seed)?,
    };
    let panel = simulate(&truth, NoiseSpec::new(cfg.sigma)?, cfg.n, cfg.burn_in, seed)?;
    Ok((truth, layout, panel))
}

fn run_replication(cfg: &MonteCarloConfig, rep: usize) -> Vec<std::result::Result<TrialResult, TrialFailure>> {
    let fail = |method: Method, e: NvarError| TrialFailure {
        rep,
        method,
        message: e.to_string(),
    };
    let (truth, layout, panel) = match replication_data(cfg, rep) {
        Ok(d) => d,
        Err(e) => {
            let msg = e.to_string();
            return cfg
                .methods
                .iter()
                .map(|&m| {
                    Err(TrialFailure {
                        rep,
                        method: m,
                        message: msg.clone(),
                    })
                })
                .collect();
        }
    };
    let c_n = cfg.c_n.unwrap_or_else(|| default_cn(cfg.n));
    let radii = cfg.radii();
    let bandwidths: Vec<usize> = (0..=cfg.max_radius).collect();
    let ordering = match cfg.case {
        Case::Scattered => OrderingStrategy::Longitude,
        _ => OrderingStrategy::Identity,
    };
    cfg.methods
        .iter()
        .map(|&method| {
            let (fit, seconds) = timed(|| -> Result<(NvarModel, Option<f64>)> {
                match method {
                    Method::Nvar => {
                        let (m, rep) = fit_nvar(&panel, truth.distance(), &[1], &radii, c_n)?;
                        Ok((m, Some(rep.d_hat)))
                    }
                    Method::Bvar => {
                        let (m, rep) =
                            fit_bvar(&panel, &layout, &ordering, &[1], &bandwidths, c_n)?;
                        Ok((m, Some(rep.d_hat)))
                    }
                    Method::Lasso => Ok((fit_lasso(&panel, 1, &cfg.lasso)?.0, None)),
                }
            });
            let (model, d_hat) = fit.map_err(|e| fail(method, e))?;
            let err = coefficient_errors(&model, &truth).map_err(|e| fail(method, e))?;
            Ok(TrialResult {
                rep,
                method,
                d_hat,
                l2: err.l2,
                frob: err.frob,
                seconds,
            })
        })
        .collect()
}

/// Replicate (generate, simulate, fit every method, score) `reps` times.
/// Replications run in parallel; results are reduced in replication order.
pub fn run_monte_carlo(cfg: &MonteCarloConfig) -> Result<SummaryTable> {
    cfg.validate()?;
    let per_rep = map_indices(cfg.reps, |rep| run_replication(cfg, rep));
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for outcome in per_rep.into_iter().flatten() {
        match outcome {
            Ok(t) => trials.push(t),
            Err(f) => failures.push(f),
        }
    }
    let radii = cfg.radii();
    let rows = cfg
        .methods
        .iter()
        .map(|&method| {
            let mine: Vec<&TrialResult> = trials.iter().filter(|t| t.method == method).collect();
            let l2: Vec<f64> = mine.iter().map(|t| t.l2).collect();
            let frob: Vec<f64> = mine.iter().map(|t| t.frob).collect();
            let (l2_mean, l2_sd) = mean_and_sd(&l2);
            let (frob_mean, frob_sd) = mean_and_sd(&frob);
            let histogram = if method == Method::Lasso {
                Vec::new()
            } else {
                radii
                    .iter()
                    .map(|&r| (r, mine.iter().filter(|t| t.d_hat == Some(r)).count()))
                    .collect()
            };
            SummaryRow {
                case: cfg.case,
                p: cfg.p,
                d0: cfg.d0,
                sigma: cfg.sigma,
                n: cfg.n,
                method,
                reps: cfg.reps,
                failures: failures.iter().filter(|f| f.method == method).count(),
                l2_mean,
                l2_sd,
                frob_mean,
                frob_sd,
                histogram,
            }
        })
        .collect();
    Ok(SummaryTable {
        rows,
        trials,
        failures,
    })
}

/// Distance matrix matching a simulation case, for callers that only know
/// the case and `p`.
pub fn case_lattice_distances(case: Case, p: usize) -> Result<crate::geometry::DistanceMatrix> {
    match case {
        Case::Lattice1d => Ok(lattice1d_distances(p)),
        Case::Lattice2d => lattice_side(p)
            .map(lattice2d_distances)
            .ok_or_else(|| NvarError::invalid("p must be a perfect square")),
        Case::Scattered => Err(NvarError::invalid(
            "case 3 distances depend on the generated layout",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::default_ids;
    use crate::linalg::DenseMatrix;

    #[test]
    fn errors_of_identity_against_zero() {
        let p = 5;
        let d = crate::geometry::DistanceMatrix::complete(p);
        let est = NvarModel::new(vec![DenseMatrix::identity(p)], 1.0, d.clone()).unwrap();
        let truth = NvarModel::new(vec![DenseMatrix::zeros(p, p)], 1.0, d).unwrap();
        let e = coefficient_errors(&est, &truth).unwrap();
        assert!((e.l2 - 1.0).abs() < 1e-12);
        assert!((e.frob - (p as f64).sqrt()).abs() < 1e-12);
        let z = coefficient_errors(&truth, &truth).unwrap();
        assert_eq!((z.l2, z.frob), (0.0, 0.0));
    }

    #[test]
    fn train_lengths() {
        assert_eq!(train_length(73, 0.8), 58);
        assert_eq!(train_length(10, 0.5), 5);
        assert_eq!(train_length(10, 0.8), 8);
    }

    #[test]
    fn horizon_beyond_test_span_fails() {
        let m = generate_case1(4, 1, 1).unwrap();
        let panel = simulate(&m, NoiseSpec::new(1.0).unwrap(), 20, 10, 1).unwrap();
        // test span 4 columns, q = 1
        assert!(mspe_one_step(&m, &panel, 0.8, 3).is_ok());
        assert!(matches!(
            mspe_one_step(&m, &panel, 0.8, 4),
            Err(NvarError::InsufficientTestSpan { needed: 5, available: 4 })
        ));
    }

    #[test]
    fn perfect_model_on_noiseless_data() {
        let m = generate_case1(3, 1, 2).unwrap();
        // deterministic path started from a non-zero column
        let mut cols = vec![vec![1.0, -0.5, 0.25]];
        for _ in 1..30 {
            let next = m.coeffs()[0].mul_vec(cols.last().unwrap());
            cols.push(next);
        }
        let series = (0..3).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        let panel = SeriesPanel::from_series(default_ids(3), series).unwrap();
        assert!(mspe_one_step(&m, &panel, 0.5, 10).unwrap() < 1e-28);
    }

    #[test]
    fn case_parsing_and_lattice_side() {
        assert_eq!(Case::try_from(2).unwrap(), Case::Lattice2d);
        assert!(Case::try_from(4).is_err());
        assert_eq!(lattice_side(100), Some(10));
        assert_eq!(lattice_side(101), None);
    }

    #[test]
    fn single_rep_has_no_sd() {
        let mut cfg = MonteCarloConfig::new(Case::Lattice1d, 10, 1, 1.0, 60, 1);
        cfg.methods = vec![Method::Nvar];
        let t = run_monte_carlo(&cfg).unwrap();
        let row = t.row(Method::Nvar).unwrap();
        assert!(row.l2_sd.is_none());
        let total: usize = row.histogram.iter().map(|(_, c)| c).sum();
        assert_eq!(total + row.failures, 1);
    }

    #[test]
    fn case2_needs_square_p() {
        let cfg = MonteCarloConfig::new(Case::Lattice2d, 101, 1, 1.0, 200, 1);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn text_rendering_has_a_line_per_row() {
        let mut cfg = MonteCarloConfig::new(Case::Lattice1d, 8, 1, 1.0, 60, 3);
        cfg.methods = vec![Method::Nvar, Method::Lasso];
        let t = run_monte_carlo(&cfg).unwrap();
        let text = t.render_text();
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("nvar") && text.contains("lasso"));
    }
}
