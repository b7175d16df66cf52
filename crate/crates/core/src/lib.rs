//! Neighborhood vector autoregression (NVAR).
//!
//! Series live at known positions (a line, a grid, points in the plane, nodes
//! of a graph). An NVAR(q) model only lets series `i` depend on the lags of
//! series within a common radius of it, and the radius is chosen by BIC. The
//! crate also carries the banded-VAR and lasso baselines, a Monte Carlo
//! harness, and the monthly-maximum ingestion pipeline for gauge data.

pub mod baselines;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod geometry;
pub mod ingest;
pub mod io;
pub mod linalg;
pub mod model;

pub use error::{NvarError, Result};
pub use estimation::{fit_nvar, select_neighborhood, FitReport, RowFit};
pub use geometry::{DistanceMatrix, NeighborhoodIndex, SensorLayout};
pub use linalg::DenseMatrix;
pub use model::{NoiseSpec, NvarModel, SeriesPanel};

pub(crate) mod par {
    #[cfg(feature = "parallel")]
    pub fn map_indices<T, F>(len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        use rayon::prelude::*;
        (0..len).into_par_iter().map(f).collect()
    }

    #[cfg(not(feature = "parallel"))]
    pub fn map_indices<T, F>(len: usize, f: F) -> Vec<T>
    where
        F: Fn(usize) -> T,
    {
        (0..len).map(f).collect()
    }
}
