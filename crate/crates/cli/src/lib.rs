//! Command implementations for the `nvar` binary.
//!
//! Every subcommand reads its parameters from flags, then from the matching
//! section of an optional JSON config file, then from built-in defaults.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use nvar_core::baselines::{
    fit_bvar, fit_lasso, LambdaGrid, LambdaSelection, LassoConfig, OrderingStrategy,
};
use nvar_core::estimation::{default_cn, fit_nvar_with, SelectionOptions};
use nvar_core::evaluation::{
    lattice_side, mspe_one_step, run_monte_carlo, train_length, Case, Method, MonteCarloConfig,
    SummaryTable,
};
use nvar_core::geometry::{
    candidate_radii, default_tau_max, euclidean_distances, graph_shortest_path_distances,
    lattice1d_distances, lattice2d_distances, DistanceScale,
};
use nvar_core::ingest::{
    center_with, monthly_max_aggregate, month_label, read_records, select_complete_submatrix,
    selection_panel, series_means,
};
use nvar_core::io;
use nvar_core::model::{
    generate_case1, generate_case2, generate_case3, simulate, DEFAULT_BURN_IN,
};
use nvar_core::{DistanceMatrix, NoiseSpec, NvarModel, SensorLayout, SeriesPanel};

#[derive(Debug, Parser)]
#[command(name = "nvar", version, about = "Neighborhood VAR estimation, simulation and benchmarks")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalArgs {
    /// Master seed for every random draw
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON file with per-command sections
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Directory for output files
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a simulation-case model and a panel from it
    Simulate(SimulateArgs),
    /// Estimate a model from a panel
    Fit(FitArgs),
    /// One-step prediction errors of fitted models
    Predict(PredictArgs),
    /// Monte Carlo comparison of the estimators
    Bench(BenchArgs),
    /// Turn gauge records into an analysis panel
    Ingest(IngestArgs),
    /// Build a distance matrix
    Distances(DistanceArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// 1: 1-D lattice, 2: square lattice, 3: random points
    #[arg(long)]
    pub case: Option<u8>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub d0: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Output file prefix
    #[arg(long)]
    pub prefix: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArgs {
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// nvar, bvar or lasso
    #[arg(long)]
    pub method: Option<String>,
    /// Square distance CSV
    #[arg(long)]
    pub distance: Option<PathBuf>,
    /// Coordinates CSV
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// 0/1 adjacency CSV (hop-count distances)
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
    /// `1d` or `2d`
    #[arg(long)]
    pub lattice: Option<String>,
    /// Euclidean scale for --layout: `auto` or a number
    #[arg(long)]
    pub scale: Option<String>,
    /// Lag orders to search
    #[arg(long, value_delimiter = ',')]
    pub q: Option<Vec<usize>>,
    /// Candidate radii, or `auto`
    #[arg(long)]
    pub radii: Option<String>,
    /// Neighborhood size cap for automatic radii
    #[arg(long)]
    pub tau_max: Option<usize>,
    /// BIC penalty multiplier
    #[arg(long)]
    pub c_n: Option<f64>,
    /// Backward elimination inside each neighborhood
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub prune: Option<bool>,
    /// identity, longitude, latitude, pca1, pca2 or a permutation
    #[arg(long)]
    pub ordering: Option<String>,
    /// Banded VAR bandwidths
    #[arg(long, value_delimiter = ',')]
    pub bandwidths: Option<Vec<usize>>,
    /// Fit on the leading fraction of the panel only
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Fixed lasso penalty instead of BIC selection
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Write the lasso path CSV
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub lasso_path: Option<bool>,
    #[arg(long)]
    pub prefix: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictArgs {
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// `name=path` of a model JSON; repeatable
    #[arg(long = "model")]
    pub models: Option<Vec<String>>,
    /// Fraction of the panel treated as training data
    #[arg(long)]
    pub split: Option<f64>,
    /// Number of predicted test times (default: all)
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub prefix: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchArgs {
    #[arg(long)]
    pub case: Option<u8>,
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub d0: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub sigma: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub max_radius: Option<usize>,
    #[arg(long)]
    pub c_n: Option<f64>,
    /// Also write per-replication results
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub trials: Option<bool>,
    /// Include wall-clock seconds in the trials file
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub timing: Option<bool>,
    #[arg(long)]
    pub prefix: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestArgs {
    /// `site_id,date,value` CSV
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// `site_id,longitude,latitude` CSV
    #[arg(long)]
    pub locations: Option<PathBuf>,
    /// Skip unparseable lines instead of failing
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub lenient: Option<bool>,
    /// Subtract training means (default true)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub center: Option<bool>,
    /// Fraction of the window whose means are subtracted
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub prefix: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceArgs {
    #[arg(long)]
    pub layout: Option<PathBuf>,
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
    /// `1d:P` or `2d:SIDE`
    #[arg(long)]
    pub lattice: Option<String>,
    #[arg(long)]
    pub scale: Option<String>,
    /// Print candidate radii for this neighborhood cap
    #[arg(long)]
    pub tau_max: Option<usize>,
    #[arg(long)]
    pub output: Option<String>,
}

/// Fill unset fields of `flags` from `file`.
fn merge<T: Serialize + DeserializeOwned>(flags: &T, file: Option<&Value>, section: &str) -> Result<T> {
    let mut merged = serde_json::to_value(flags)?;
    if let (Some(Value::Object(file)), Value::Object(out)) = (file, &mut merged) {
        for (k, v) in file {
            match out.get(k) {
                Some(Value::Null) | None => {
                    out.insert(k.clone(), v.clone());
                }
                _ => {}
            }
        }
    }
    serde_json::from_value(merged).with_context(|| format!("config section '{section}'"))
}

fn load_config(path: Option<&Path>) -> Result<BTreeMap<String, Value>> {
    let Some(path) = path else {
        return Ok(BTreeMap::new());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let map: BTreeMap<String, Value> = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    for key in map.keys() {
        if !["global", "simulate", "fit", "predict", "bench", "ingest", "distances"].contains(&key.as_str()) {
            bail!("config {}: unknown section '{key}'", path.display());
        }
    }
    Ok(map)
}

pub struct RunContext {
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl RunContext {
    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Parse arguments (including the program name) and run.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| anyhow!(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<()> {
    let config = load_config(cli.global.config.as_deref())?;
    let global: GlobalArgs = merge(&cli.global, config.get("global"), "global")?;
    if let Some(t) = global.threads {
        if t == 0 {
            bail!("--threads: must be at least 1");
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let ctx = RunContext {
        seed: global.seed.unwrap_or(0),
        out_dir: global.out_dir.unwrap_or_else(|| PathBuf::from(".")),
    };
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&merge(a, config.get("simulate"), "simulate")?, &ctx),
        Command::Fit(a) => cmd_fit(&merge(a, config.get("fit"), "fit")?, &ctx),
        Command::Predict(a) => cmd_predict(&merge(a, config.get("predict"), "predict")?, &ctx),
        Command::Bench(a) => cmd_bench(&merge(a, config.get("bench"), "bench")?, &ctx),
        Command::Ingest(a) => cmd_ingest(&merge(a, config.get("ingest"), "ingest")?, &ctx),
        Command::Distances(a) => cmd_distances(&merge(a, config.get("distances"), "distances")?, &ctx),
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> nvar_core::Result<()>) -> Result<()> {
    let mut w = io::create(path)?;
    f(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush()?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn read_panel(path: &Path) -> Result<SeriesPanel> {
    io::read_panel_csv(io::open(path)?).with_context(|| format!("reading panel {}", path.display()))
}

fn require<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| anyhow!("missing required option --{flag}"))
}

fn parse_case(case: u8) -> Result<Case> {
    Case::try_from(case).map_err(|_| anyhow!("--case: must be 1, 2 or 3 (got {case})"))
}

fn parse_scale(scale: Option<&str>) -> Result<DistanceScale> {
    match scale {
        None | Some("auto") => Ok(DistanceScale::Auto),
        Some(s) => {
            let v: f64 = s
                .parse()
                .map_err(|_| anyhow!("--scale: expected 'auto' or a positive number, got '{s}'"))?;
            if !(v > 0.0 && v.is_finite()) {
                bail!("--scale: must be positive, got {v}");
            }
            Ok(DistanceScale::Fixed(v))
        }
    }
}

pub fn cmd_simulate(a: &SimulateArgs, ctx: &RunContext) -> Result<()> {
    let case = parse_case(*require(&a.case, "case")?)?;
    let p = *require(&a.p, "p")?;
    let d0 = a.d0.unwrap_or(1);
    let sigma = a.sigma.unwrap_or(1.0);
    let n = a.n.unwrap_or(200);
    let burn_in = a.burn_in.unwrap_or(DEFAULT_BURN_IN);
    let prefix = a.prefix.as_deref().unwrap_or("sim");
    let noise = NoiseSpec::new(sigma).map_err(|e| anyhow!("--sigma: {e}"))?;
    if n == 0 {
        bail!("--n: must be at least 1");
    }
    let (model, layout) = match case {
        Case::Lattice1d => {
            if p == 0 {
                bail!("--p: must be at least 1");
            }
            (generate_case1(p, d0, ctx.seed)?, None)
        }
        Case::Lattice2d => {
            let side = lattice_side(p).ok_or_else(|| {
                anyhow!("--p: must be a perfect square for the 2-D lattice (got {p})")
            })?;
            (generate_case2(side, d0, ctx.seed)?, None)
        }
        Case::Scattered => {
            if p < 2 {
                bail!("--p: case 3 needs at least 2 points");
            }
            let (layout, model) = generate_case3(p, d0, ctx.seed)?;
            (model, Some(layout))
        }
    };
    let panel = simulate(&model, noise, n, burn_in, ctx.seed)?;
    write_file(&ctx.path(&format!("{prefix}_panel.csv")), |w| io::write_panel_csv(&panel, w))?;
    write_file(&ctx.path(&format!("{prefix}_model.json")), |w| io::write_json(&model, w))?;
    write_file(&ctx.path(&format!("{prefix}_distance.csv")), |w| {
        io::write_distance_csv(model.distance(), w)
    })?;
    if let Some(layout) = layout {
        write_file(&ctx.path(&format!("{prefix}_layout.csv")), |w| io::write_layout_csv(&layout, w))?;
    }
    Ok(())
}

fn lattice_for(spec: &str, p: usize) -> Result<DistanceMatrix> {
    match spec {
        "1d" => Ok(lattice1d_distances(p)),
        "2d" => lattice_side(p)
            .map(lattice2d_distances)
            .ok_or_else(|| anyhow!("--lattice 2d: panel has {p} series, not a perfect square")),
        other => bail!("--lattice: expected '1d' or '2d', got '{other}'"),
    }
}

fn read_layout(path: &Path, ids: &[String]) -> Result<SensorLayout> {
    let layout = io::read_layout_csv(io::open(path)?)
        .with_context(|| format!("reading layout {}", path.display()))?;
    if layout.ids == ids {
        return Ok(layout);
    }
    // align rows with the panel's series order
    io::layout_for_ids(&layout, ids).with_context(|| format!("matching {} to the panel", path.display()))
}

fn distance_source(a: &FitArgs, panel: &SeriesPanel) -> Result<(DistanceMatrix, Option<SensorLayout>)> {
    let ids = panel.ids();
    let sources = [a.distance.is_some(), a.layout.is_some(), a.lattice.is_some(), a.adjacency.is_some()];
    if sources.iter().filter(|s| **s).count() > 1 {
        bail!("give only one of --distance, --layout, --lattice, --adjacency");
    }
    let d = if let Some(path) = &a.distance {
        (
            io::read_distance_csv(io::open(path)?)
                .with_context(|| format!("reading distances {}", path.display()))?,
            None,
        )
    } else if let Some(path) = &a.layout {
        let layout = read_layout(path, ids)?;
        (euclidean_distances(&layout, parse_scale(a.scale.as_deref())?)?, Some(layout))
    } else if let Some(spec) = &a.lattice {
        (lattice_for(spec, panel.p())?, None)
    } else if let Some(path) = &a.adjacency {
        let layout = io::read_adjacency_csv(io::open(path)?, Some(ids.to_vec()))?;
        (graph_shortest_path_distances(&layout)?, None)
    } else {
        bail!(
            "no distance source: pass one of --distance <csv>, --layout <csv> or --lattice 1d|2d (or --adjacency <csv> for graph distances)"
        );
    };
    if d.0.p() != panel.p() {
        bail!("distance matrix is {0}x{0} but the panel has {1} series", d.0.p(), panel.p());
    }
    Ok(d)
}

fn parse_radii(spec: Option<&str>, d: &DistanceMatrix, tau_max: usize) -> Result<Vec<f64>> {
    match spec {
        None | Some("auto") => Ok(candidate_radii(d, tau_max)),
        Some(list) => {
            let mut radii = list
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| anyhow!("--radii: '{t}' is not a number"))
                })
                .collect::<Result<Vec<f64>>>()?;
            radii.sort_by(f64::total_cmp);
            radii.dedup();
            if radii.iter().any(|r| !(*r >= 0.0)) {
                bail!("--radii: radii must be non-negative");
            }
            Ok(radii)
        }
    }
}

/// Model and report of one fit, ready to be written.
struct Fitted {
    model: NvarModel,
    report: Value,
    bic: Option<nvar_core::FitReport>,
    lasso_path: Option<Vec<nvar_core::baselines::LassoPathPoint>>,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = std::time::Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

pub fn cmd_fit(a: &FitArgs, ctx: &RunContext) -> Result<()> {
    let full = read_panel(require(&a.panel, "panel")?)?;
    let panel = match a.train_fraction {
        None => full,
        Some(f) => {
            if !(f > 0.0 && f < 1.0) {
                bail!("--train-fraction: must lie in (0, 1), got {f}");
            }
            full.slice_time(0, train_length(full.n(), f))
        }
    };
    let method: Method = a.method.as_deref().unwrap_or("nvar").parse().map_err(|e| anyhow!("--method: {e}"))?;
    let q_grid = a.q.clone().unwrap_or_else(|| vec![1]);
    if q_grid.is_empty() || q_grid.contains(&0) {
        bail!("--q: lag orders must be at least 1");
    }
    let c_n = a.c_n.unwrap_or_else(|| default_cn(panel.n()));
    if !(c_n >= 0.0 && c_n.is_finite()) {
        bail!("--c-n: must be a non-negative number");
    }
    let prefix = a.prefix.as_deref().unwrap_or(method.name());
    let p = panel.p();

    let (fitted, seconds) = match method {
        Method::Nvar => {
            let (d, _) = distance_source(a, &panel)?;
            let tau_max = a.tau_max.unwrap_or_else(|| default_tau_max(p));
            let radii = parse_radii(a.radii.as_deref(), &d, tau_max)?;
            let opts = SelectionOptions {
                c_n,
                prune: a.prune.unwrap_or(false),
            };
            let (res, secs) = timed(|| fit_nvar_with(&panel, &d, &q_grid, &radii, opts));
            let (model, report) = res?;
            (
                Fitted {
                    model,
                    report: serde_json::to_value(&report)?,
                    bic: Some(report),
                    lasso_path: None,
                },
                secs,
            )
        }
        Method::Bvar => {
            let ordering: OrderingStrategy = a
                .ordering
                .as_deref()
                .unwrap_or("identity")
                .parse()
                .map_err(|e| anyhow!("--ordering: {e}"))?;
            let layout = match &a.layout {
                Some(path) => read_layout(path, panel.ids())?,
                None if matches!(ordering, OrderingStrategy::Identity | OrderingStrategy::Custom(_)) => {
                    SensorLayout {
                        ids: panel.ids().to_vec(),
                        coordinates: None,
                        adjacency: None,
                    }
                }
                None => bail!("--ordering {}: needs --layout with 2-D coordinates", a.ordering.as_deref().unwrap_or("")),
            };
            let bandwidths = match &a.bandwidths {
                Some(b) => b.clone(),
                None => (0..=default_tau_max(p) / 2).collect(),
            };
            let (res, secs) = timed(|| fit_bvar(&panel, &layout, &ordering, &q_grid, &bandwidths, c_n));
            let (model, report) = res?;
            (
                Fitted {
                    model,
                    report: serde_json::to_value(&report)?,
                    bic: Some(report),
                    lasso_path: None,
                },
                secs,
            )
        }
        Method::Lasso => {
            if q_grid.len() != 1 {
                bail!("--q: lasso takes a single lag order");
            }
            let cfg = LassoConfig {
                lambda_grid: LambdaGrid::Auto {
                    count: 50,
                    min_ratio: 1e-3,
                },
                selection: match a.lambda {
                    Some(l) => LambdaSelection::Fixed(l),
                    None => LambdaSelection::Bic,
                },
                c_n: Some(c_n),
                ..LassoConfig::default()
            };
            let (res, secs) = timed(|| fit_lasso(&panel, q_grid[0], &cfg));
            let (model, report) = res?;
            let path = a.lasso_path.unwrap_or(false).then(|| report.path.clone());
            let mut summary = serde_json::to_value(&report)?;
            if let Value::Object(m) = &mut summary {
                m.remove("path");
            }
            (
                Fitted {
                    model,
                    report: summary,
                    bic: None,
                    lasso_path: path,
                },
                secs,
            )
        }
    };

    let model = fitted.model.with_method(method.name(), seconds);
    write_file(&ctx.path(&format!("{prefix}_model.json")), |w| io::write_json(&model, w))?;
    write_file(&ctx.path(&format!("{prefix}_report.json")), |w| io::write_json(&fitted.report, w))?;
    if let Some(rep) = &fitted.bic {
        write_file(&ctx.path(&format!("{prefix}_bic.csv")), |w| {
            io::write_bic_table_csv(rep, panel.ids(), w)
        })?;
        println!("{method}: q = {}, radius = {}, BIC sum = {}", rep.q, rep.d_hat, rep.bic_sum);
    } else {
        println!("{method}: q = {}", model.q());
    }
    if let Some(path) = &fitted.lasso_path {
        write_file(&ctx.path(&format!("{prefix}_lasso_path.csv")), |w| io::write_lasso_path_csv(path, w))?;
    }
    Ok(())
}

/// One row of the prediction table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRow {
    pub method: String,
    pub bandwidth: Option<f64>,
    pub mspe: f64,
    pub seconds: Option<f64>,
}

pub fn cmd_predict(a: &PredictArgs, ctx: &RunContext) -> Result<()> {
    let panel = read_panel(require(&a.panel, "panel")?)?;
    let specs = require(&a.models, "model")?;
    if specs.is_empty() {
        bail!("--model: give at least one name=path");
    }
    let split = a.split.unwrap_or(0.8);
    if !(split > 0.0 && split < 1.0) {
        bail!("--split: must lie in (0, 1), got {split}");
    }
    let prefix = a.prefix.as_deref().unwrap_or("predict");
    let mut models = Vec::new();
    for spec in specs {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("--model: expected name=path, got '{spec}'"))?;
        let model: NvarModel = io::read_json(io::open(Path::new(path))?)
            .with_context(|| format!("reading model {path}"))?;
        models.push((name.to_string(), model));
    }
    let test_len = panel.n() - train_length(panel.n(), split);
    let max_q = models.iter().map(|(_, m)| m.q()).max().unwrap_or(1);
    let horizon = a.horizon.unwrap_or(test_len.saturating_sub(max_q).max(1));
    let rows = models
        .iter()
        .map(|(name, m)| {
            let mspe = mspe_one_step(m, &panel, split, horizon).with_context(|| format!("model '{name}'"))?;
            let bandwidth = (m.method.as_deref() != Some("lasso")).then(|| m.radius());
            Ok(PredictionRow {
                method: name.clone(),
                bandwidth,
                mspe,
                seconds: m.fit_seconds,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    write_file(&ctx.path(&format!("{prefix}_mspe.csv")), |w| write_prediction_csv(&rows, w))?;
    println!("{:<12} {:>10} {:>12} {:>12}", "method", "bandwidth", "MSPE", "seconds");
    for r in &rows {
        println!(
            "{:<12} {:>10} {:>12.4} {:>12}",
            r.method,
            r.bandwidth.map_or("-".into(), |b| b.to_string()),
            r.mspe,
            r.seconds.map_or("-".into(), |s| format!("{s:.3}"))
        );
    }
    Ok(())
}

pub const PREDICTION_HEADER: [&str; 4] = ["method", "bandwidth", "mspe", "seconds"];

fn write_prediction_csv(rows: &[PredictionRow], w: &mut dyn Write) -> nvar_core::Result<()> {
    writeln!(w, "{}", PREDICTION_HEADER.join(","))?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.method,
            r.bandwidth.map_or(String::new(), |b| b.to_string()),
            r.mspe,
            r.seconds.map_or(String::new(), |s| s.to_string())
        )?;
    }
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs, ctx: &RunContext) -> Result<()> {
    let case = parse_case(a.case.unwrap_or(1))?;
    let ps = a.p.clone().unwrap_or_else(|| vec![100]);
    let d0s = a.d0.clone().unwrap_or_else(|| vec![1]);
    let sigmas = a.sigma.clone().unwrap_or_else(|| vec![1.0]);
    let ns = a.n.clone().unwrap_or_else(|| vec![200]);
    let reps = a.reps.unwrap_or(50);
    if reps == 0 {
        bail!("--reps: must be at least 1");
    }
    let methods = a
        .methods
        .clone()
        .unwrap_or_else(|| vec!["nvar".into(), "bvar".into(), "lasso".into()])
        .iter()
        .map(|m| m.parse::<Method>().map_err(|e| anyhow!("--methods: {e}")))
        .collect::<Result<Vec<_>>>()?;
    for &p in &ps {
        if case == Case::Lattice2d && lattice_side(p).is_none() {
            bail!("--p: must be a perfect square for the 2-D lattice (got {p})");
        }
    }
    for &s in &sigmas {
        NoiseSpec::new(s).map_err(|e| anyhow!("--sigma: {e}"))?;
    }
    let prefix = a.prefix.as_deref().unwrap_or("bench");

    let mut table = SummaryTable {
        rows: Vec::new(),
        trials: Vec::new(),
        failures: Vec::new(),
    };
    let total = ps.len() * d0s.len() * sigmas.len() * ns.len();
    let mut done = 0;
    for &p in &ps {
        for &d0 in &d0s {
            for &sigma in &sigmas {
                for &n in &ns {
                    let mut cfg = MonteCarloConfig::new(case, p, d0, sigma, n, reps);
                    cfg.methods = methods.clone();
                    cfg.seed = ctx.seed;
                    cfg.max_radius = a.max_radius.unwrap_or(4);
                    cfg.c_n = a.c_n;
                    let (res, secs) = timed(|| run_monte_carlo(&cfg));
                    let part = res?;
                    done += 1;
                    eprintln!(
                        "[{done}/{total}] case {} p={p} d0={d0} sigma={sigma} n={n}: {reps} reps in {secs:.1}s, {} failures",
                        case.number(),
                        part.failures.len()
                    );
                    table.extend(part);
                }
            }
        }
    }
    write_file(&ctx.path(&format!("{prefix}_summary.csv")), |w| io::write_summary_csv(&table, w))?;
    let json = SummaryTable {
        trials: Vec::new(),
        ..table.without_timing()
    };
    write_file(&ctx.path(&format!("{prefix}_summary.json")), |w| io::write_json(&json, w))?;
    let text = table.render_text();
    write_file(&ctx.path(&format!("{prefix}_summary.txt")), |w| {
        w.write_all(text.as_bytes())?;
        Ok(())
    })?;
    if a.trials.unwrap_or(false) {
        let timing = a.timing.unwrap_or(false);
        write_file(&ctx.path(&format!("{prefix}_trials.csv")), |w| {
            io::write_trials_csv(&table.trials, timing, w)
        })?;
    }
    print!("{text}");
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestReport {
    pub sites: Vec<String>,
    pub first_month: String,
    pub last_month: String,
    pub p: usize,
    pub n: usize,
    pub centered: bool,
    pub means: Option<Vec<f64>>,
    pub skipped_lines: Vec<nvar_core::ingest::SkippedLine>,
}

pub fn cmd_ingest(a: &IngestArgs, ctx: &RunContext) -> Result<()> {
    let path = require(&a.records, "records")?;
    let (records, skipped) = read_records(io::open(path)?, a.lenient.unwrap_or(false))
        .with_context(|| format!("reading records {}", path.display()))?;
    for s in &skipped {
        eprintln!("skipped line {}: {}", s.line, s.message);
    }
    let grid = monthly_max_aggregate(&records)?;
    let sel = select_complete_submatrix(&grid)?;
    let panel = selection_panel(&grid, &sel)?;
    let center = a.center.unwrap_or(true);
    let prefix = a.prefix.as_deref().unwrap_or("ingest");
    let (panel, means) = if center {
        let frac = a.train_fraction.unwrap_or(0.8);
        if !(frac > 0.0 && frac <= 1.0) {
            bail!("--train-fraction: must lie in (0, 1], got {frac}");
        }
        let cut = train_length(panel.n(), frac).max(1);
        let means = series_means(&panel.slice_time(0, cut));
        (center_with(&panel, &means), Some(means))
    } else {
        (panel, None)
    };

    write_file(&ctx.path(&format!("{prefix}_panel.csv")), |w| io::write_panel_csv(&panel, w))?;
    if let Some(loc) = &a.locations {
        let layout = read_layout(loc, panel.ids())?;
        write_file(&ctx.path(&format!("{prefix}_layout.csv")), |w| io::write_layout_csv(&layout, w))?;
    }
    let report = IngestReport {
        sites: panel.ids().to_vec(),
        first_month: month_label(grid.first_month + sel.start as i64),
        last_month: month_label(grid.first_month + (sel.start + sel.len - 1) as i64),
        p: panel.p(),
        n: panel.n(),
        centered: center,
        means,
        skipped_lines: skipped,
    };
    write_file(&ctx.path(&format!("{prefix}_selection.json")), |w| io::write_json(&report, w))?;
    println!(
        "selected {} sites x {} months ({} to {})",
        report.p, report.n, report.first_month, report.last_month
    );
    Ok(())
}

pub fn cmd_distances(a: &DistanceArgs, ctx: &RunContext) -> Result<()> {
    let sources = [a.layout.is_some(), a.adjacency.is_some(), a.lattice.is_some()];
    let d = match sources.iter().filter(|s| **s).count() {
        0 => bail!("no distance source: pass one of --layout <csv>, --adjacency <csv> or --lattice 1d:P|2d:SIDE"),
        1 => {
            if let Some(path) = &a.layout {
                let layout = io::read_layout_csv(io::open(path)?)?;
                euclidean_distances(&layout, parse_scale(a.scale.as_deref())?)?
            } else if let Some(path) = &a.adjacency {
                graph_shortest_path_distances(&io::read_adjacency_csv(io::open(path)?, None)?)?
            } else {
                let spec = a.lattice.as_deref().unwrap_or_default();
                let (kind, size) = spec
                    .split_once(':')
                    .ok_or_else(|| anyhow!("--lattice: expected 1d:P or 2d:SIDE, got '{spec}'"))?;
                let size: usize = size
                    .parse()
                    .map_err(|_| anyhow!("--lattice: '{size}' is not a count"))?;
                match kind {
                    "1d" => lattice1d_distances(size),
                    "2d" => lattice2d_distances(size),
                    _ => bail!("--lattice: expected 1d:P or 2d:SIDE, got '{spec}'"),
                }
            }
        }
        _ => bail!("give only one of --layout, --adjacency, --lattice"),
    };
    let name = a.output.as_deref().unwrap_or("distance.csv");
    write_file(&ctx.path(name), |w| io::write_distance_csv(&d, w))?;
    if let Some(tau) = a.tau_max {
        let radii: Vec<String> = candidate_radii(&d, tau).iter().map(f64::to_string).collect();
        println!("{}", radii.join(","));
    }
    Ok(())
}
