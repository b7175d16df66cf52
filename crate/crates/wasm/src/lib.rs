//! Browser bindings for the demo page in `www/`.
//!
//! Every export takes plain numbers and returns a JSON string, so the page
//! needs no generated TypeScript types. The `*_json` functions hold the
//! logic and also run natively for tests.

use nvar_core::baselines::{fit_bvar, OrderingStrategy};
use nvar_core::estimation::default_cn;
use nvar_core::evaluation::{
    coefficient_errors, replication_data, run_monte_carlo, Case, Method, MonteCarloConfig,
};
use nvar_core::geometry::{candidate_radii, neighborhood};
use nvar_core::{fit_nvar, DenseMatrix, NvarError, SensorLayout};
use serde::Serialize;
use wasm_bindgen::prelude::*;

type Result<T> = std::result::Result<T, NvarError>;

fn case_from(n: u8) -> Result<Case> {
    Case::try_from(n)
}

/// Plot positions: given coordinates, else a line or a square grid.
fn positions(case: Case, layout: &SensorLayout) -> Vec<[f64; 2]> {
    if let Some(c) = &layout.coordinates {
        return c.iter().map(|xy| [xy[0], xy.get(1).copied().unwrap_or(0.0)]).collect();
    }
    let p = layout.p();
    match case {
        Case::Lattice2d => {
            let side = (p as f64).sqrt().round() as usize;
            (0..p).map(|i| [(i % side) as f64, (i / side) as f64]).collect()
        }
        _ => (0..p).map(|i| [i as f64, 0.0]).collect(),
    }
}

fn rows(a: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..a.rows()).map(|i| a.row(i).to_vec()).collect()
}

#[derive(Serialize)]
struct Explorer {
    positions: Vec<[f64; 2]>,
    radius: f64,
    members: Vec<Vec<usize>>,
    candidate_radii: Vec<f64>,
}

pub fn neighborhoods_json(case: u8, p: usize, radius: f64, seed: u64) -> Result<String> {
    let case = case_from(case)?;
    let cfg = MonteCarloConfig {
        seed,
        ..MonteCarloConfig::new(case, p, 1, 1.0, 2, 1)
    };
    cfg.validate()?;
    let (truth, layout, _) = replication_data(&cfg, 0)?;
    let d = truth.distance();
    Ok(serde_json::to_string(&Explorer {
        positions: positions(case, &layout),
        radius,
        members: neighborhood(d, radius).members,
        candidate_radii: candidate_radii(d, 4 * p.min(25)),
    })?)
}

#[derive(Serialize)]
struct MethodFit {
    name: &'static str,
    radius: f64,
    l2: f64,
    coeffs: Vec<Vec<f64>>,
    /// Mean over series of the BIC at each candidate radius.
    bic_curve: Vec<(f64, f64)>,
}

#[derive(Serialize)]
struct FitDemo {
    p: usize,
    n: usize,
    c_n: f64,
    truth: Vec<Vec<f64>>,
    fits: Vec<MethodFit>,
}

fn bic_curve(radii: &[f64], table: &[Vec<Option<f64>>]) -> Vec<(f64, f64)> {
    radii
        .iter()
        .zip(table)
        .filter_map(|(&r, row)| {
            let vals: Vec<f64> = row.iter().flatten().copied().collect();
            (vals.len() == row.len()).then(|| (r, vals.iter().sum::<f64>() / vals.len() as f64))
        })
        .collect()
}

pub fn fit_demo_json(case: u8, p: usize, d0: usize, sigma: f64, n: usize, seed: u64) -> Result<String> {
    let case = case_from(case)?;
    let cfg = MonteCarloConfig {
        seed,
        ..MonteCarloConfig::new(case, p, d0, sigma, n, 1)
    };
    cfg.validate()?;
    let (truth, layout, panel) = replication_data(&cfg, 0)?;
    let c_n = default_cn(n);
    let radii = cfg.radii();
    let (nvar, nrep) = fit_nvar(&panel, truth.distance(), &[1], &radii, c_n)?;
    let ordering = match case {
        Case::Scattered => OrderingStrategy::Longitude,
        _ => OrderingStrategy::Identity,
    };
    let bands: Vec<usize> = (0..=cfg.max_radius).collect();
    let (bvar, brep) = fit_bvar(&panel, &layout, &ordering, &[1], &bands, c_n)?;
    let fits = vec![
        MethodFit {
            name: "NVAR",
            radius: nrep.d_hat,
            l2: coefficient_errors(&nvar, &truth)?.l2,
            coeffs: rows(&nvar.coeffs()[0]),
            bic_curve: bic_curve(&nrep.radii, &nrep.bic_table),
        },
        MethodFit {
            name: "BVAR",
            radius: brep.d_hat,
            l2: coefficient_errors(&bvar, &truth)?.l2,
            coeffs: rows(&bvar.coeffs()[0]),
            bic_curve: bic_curve(&brep.radii, &brep.bic_table),
        },
    ];
    Ok(serde_json::to_string(&FitDemo {
        p,
        n,
        c_n,
        truth: rows(&truth.coeffs()[0]),
        fits,
    })?)
}

pub fn monte_carlo_json(
    case: u8,
    p: usize,
    d0: usize,
    sigma: f64,
    n: usize,
    reps: usize,
    with_lasso: bool,
    seed: u64,
) -> Result<String> {
    let mut cfg = MonteCarloConfig::new(case_from(case)?, p, d0, sigma, n, reps);
    cfg.seed = seed;
    cfg.methods = vec![Method::Nvar, Method::Bvar];
    if with_lasso {
        cfg.methods.push(Method::Lasso);
    }
    let table = run_monte_carlo(&cfg)?.without_timing();
    Ok(serde_json::to_string(&table.rows)?)
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

/// Positions and radius-`radius` neighborhoods of a simulation layout.
#[wasm_bindgen]
pub fn neighborhoods(case: u8, p: usize, radius: f64, seed: u32) -> std::result::Result<String, JsError> {
    js(neighborhoods_json(case, p, radius, seed.into()))
}

/// Simulate one panel, fit NVAR and BVAR, return coefficients and BIC curves.
#[wasm_bindgen]
pub fn fit_demo(
    case: u8,
    p: usize,
    d0: usize,
    sigma: f64,
    n: usize,
    seed: u32,
) -> std::result::Result<String, JsError> {
    js(fit_demo_json(case, p, d0, sigma, n, seed.into()))
}

/// Summary rows of a small Monte Carlo run.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo(
    case: u8,
    p: usize,
    d0: usize,
    sigma: f64,
    n: usize,
    reps: usize,
    with_lasso: bool,
    seed: u32,
) -> std::result::Result<String, JsError> {
    js(monte_carlo_json(case, p, d0, sigma, n, reps, with_lasso, seed.into()))
}
