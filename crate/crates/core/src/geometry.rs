//! Distance matrices between series and the neighborhoods they induce.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{NvarError, Result};

/// Symmetric p×p distances with zero diagonal. Unreachable graph pairs are
/// stored as `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    p: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(NvarError::ShapeMismatch(
                "distance matrix must be square".into(),
            ));
        }
        Self::from_entries(p, rows.concat())
    }

    pub fn from_entries(p: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != p * p {
            return Err(NvarError::ShapeMismatch(format!(
                "{} entries for a {p}x{p} distance matrix",
                entries.len()
            )));
        }
        for i in 0..p {
            if entries[i * p + i] != 0.0 {
                return Err(NvarError::invalid(format!(
                    "distance diagonal must be zero (entry {i} is {})",
                    entries[i * p + i]
                )));
            }
            for j in 0..p {
                let d = entries[i * p + j];
                if d.is_nan() || d < 0.0 || d == f64::NEG_INFINITY {
                    return Err(NvarError::invalid(format!(
                        "distance ({i},{j}) must be non-negative, got {d}"
                    )));
                }
                if d != entries[j * p + i] {
                    return Err(NvarError::invalid(format!(
                        "distance matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(DistanceMatrix { p, entries })
    }

    /// Every pair at distance 1: a single radius admits all series.
    pub fn complete(p: usize) -> Self {
        let mut entries = vec![1.0; p * p];
        for i in 0..p {
            entries[i * p + i] = 0.0;
        }
        DistanceMatrix { p, entries }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.p + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.p..(i + 1) * self.p]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.p).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn max_finite(&self) -> f64 {
        self.entries
            .iter()
            .copied()
            .filter(|d| d.is_finite())
            .fold(0.0, f64::max)
    }

    /// Relabel series so that new index `k` is old index `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> DistanceMatrix {
        let p = self.p;
        let mut entries = vec![0.0; p * p];
        for a in 0..p {
            for b in 0..p {
                entries[a * p + b] = self.get(order[a], order[b]);
            }
        }
        DistanceMatrix { p, entries }
    }
}

// JSON has no infinity, so unreachable pairs travel as null.
impl Serialize for DistanceMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Option<f64>>> = (0..self.p)
            .map(|i| {
                self.row(i)
                    .iter()
                    .map(|&d| d.is_finite().then_some(d))
                    .collect()
            })
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DistanceMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<Option<f64>>> = Vec::deserialize(d)?;
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|v| v.unwrap_or(f64::INFINITY)).collect())
            .collect();
        DistanceMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Where the series live: identifiers plus optional coordinates or adjacency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorLayout {
    pub ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<Vec<bool>>>,
}

impl SensorLayout {
    pub fn lattice(p: usize) -> Self {
        SensorLayout {
            ids: default_ids(p),
            coordinates: None,
            adjacency: None,
        }
    }

    pub fn with_coordinates(ids: Vec<String>, coordinates: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != coordinates.len() {
            return Err(NvarError::ShapeMismatch(format!(
                "{} ids but {} coordinate rows",
                ids.len(),
                coordinates.len()
            )));
        }
        let m = coordinates.first().map_or(1, Vec::len);
        if !(1..=3).contains(&m) || coordinates.iter().any(|c| c.len() != m) {
            return Err(NvarError::invalid(
                "coordinates must all share one dimension between 1 and 3",
            ));
        }
        if coordinates.iter().flatten().any(|v| !v.is_finite()) {
            return Err(NvarError::invalid("coordinates must be finite"));
        }
        Ok(SensorLayout {
            ids,
            coordinates: Some(coordinates),
            adjacency: None,
        })
    }

    pub fn with_adjacency(ids: Vec<String>, adjacency: Vec<Vec<bool>>) -> Result<Self> {
        let p = ids.len();
        if adjacency.len() != p || adjacency.iter().any(|r| r.len() != p) {
            return Err(NvarError::ShapeMismatch(format!(
                "adjacency must be {p}x{p}"
            )));
        }
        for i in 0..p {
            if adjacency[i][i] {
                return Err(NvarError::invalid(format!("adjacency has a self-loop at {i}")));
            }
            for j in 0..p {
                if adjacency[i][j] != adjacency[j][i] {
                    return Err(NvarError::invalid(format!(
                        "adjacency is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(SensorLayout {
            ids,
            coordinates: None,
            adjacency: Some(adjacency),
        })
    }

    pub fn p(&self) -> usize {
        self.ids.len()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.coordinates
            .as_ref()
            .and_then(|c| c.first())
            .map(Vec::len)
    }
}

pub fn default_ids(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("s{i}")).collect()
}

/// Series within `radius` of each series, sorted ascending, self included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodIndex {
    pub radius: f64,
    pub members: Vec<Vec<usize>>,
}

impl NeighborhoodIndex {
    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn max_size(&self) -> usize {
        self.members.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// `d(i, j) = |i − j|`.
pub fn lattice1d_distances(p: usize) -> DistanceMatrix {
    let mut entries = Vec::with_capacity(p * p);
    for i in 0..p {
        for j in 0..p {
            entries.push(i.abs_diff(j) as f64);
        }
    }
    DistanceMatrix { p, entries }
}

/// City-block distance on a `side × side` grid vectorised row by row:
/// series `k` sits at `(k / side, k % side)`.
pub fn lattice2d_distances(side: usize) -> DistanceMatrix {
    let p = side * side;
    let mut entries = Vec::with_capacity(p * p);
    for a in 0..p {
        let (ra, ca) = (a / side, a % side);
        for b in 0..p {
            let (rb, cb) = (b / side, b % side);
            entries.push((ra.abs_diff(rb) + ca.abs_diff(cb)) as f64);
        }
    }
    DistanceMatrix { p, entries }
}

/// How Euclidean distances are rescaled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceScale {
    /// Multiply by `(p/2) / d_maxᵐ`, m the coordinate dimension.
    Auto,
    Fixed(f64),
}

pub fn euclidean_distances(layout: &SensorLayout, scale: DistanceScale) -> Result<DistanceMatrix> {
    let coords = layout
        .coordinates
        .as_ref()
        .ok_or_else(|| NvarError::invalid("layout has no coordinates"))?;
    let p = coords.len();
    let mut entries = vec![0.0; p * p];
    for i in 0..p {
        for j in i + 1..p {
            let d = coords[i]
                .iter()
                .zip(&coords[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            entries[i * p + j] = d;
            entries[j * p + i] = d;
        }
    }
    let factor = match scale {
        DistanceScale::Fixed(s) => {
            if !(s > 0.0 && s.is_finite()) {
                return Err(NvarError::invalid(format!("scale must be positive, got {s}")));
            }
            s
        }
        DistanceScale::Auto => {
            let d_max = entries.iter().copied().fold(0.0, f64::max);
            let m = layout.dimension().unwrap_or(1) as i32;
            if d_max == 0.0 {
                1.0
            } else {
                (p as f64 / 2.0) / d_max.powi(m)
            }
        }
    };
    if factor != 1.0 {
        for e in &mut entries {
            *e *= factor;
        }
    }
    Ok(DistanceMatrix { p, entries })
}

/// Hop counts by breadth-first search from every node.
pub fn graph_shortest_path_distances(layout: &SensorLayout) -> Result<DistanceMatrix> {
    let adjacency = layout
        .adjacency
        .as_ref()
        .ok_or_else(|| NvarError::invalid("layout has no adjacency"))?;
    let p = adjacency.len();
    let neighbors: Vec<Vec<usize>> = adjacency
        .iter()
        .map(|row| (0..p).filter(|&j| row[j]).collect())
        .collect();
    let mut entries = vec![f64::INFINITY; p * p];
    let mut queue = VecDeque::new();
    for source in 0..p {
        let dist = &mut entries[source * p..(source + 1) * p];
        dist[source] = 0.0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u];
            for &v in &neighbors[u] {
                if dist[v].is_infinite() {
                    dist[v] = du + 1.0;
                    queue.push_back(v);
                }
            }
        }
    }
    Ok(DistanceMatrix { p, entries })
}

/// `members[i] = { j : d(i, j) ≤ radius }`.
pub fn neighborhood(d: &DistanceMatrix, radius: f64) -> NeighborhoodIndex {
    let members = (0..d.p())
        .map(|i| {
            d.row(i)
                .iter()
                .enumerate()
                .filter(|(_, &dij)| dij <= radius)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    NeighborhoodIndex { radius, members }
}

/// Distinct finite distances in ascending order, starting at 0. The list
/// ends at the first radius where some neighborhood reaches `tau_max`
/// members, and never includes a radius where one would exceed it.
pub fn candidate_radii(d: &DistanceMatrix, tau_max: usize) -> Vec<f64> {
    // the k-th smallest distance in row i is the radius at which
    // neighborhood i first holds k + 1 members
    let kth_min = |k: usize| {
        (0..d.p())
            .filter_map(|i| {
                let mut row = d.row(i).to_vec();
                row.sort_by(f64::total_cmp);
                row.get(k).copied()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let exceed = kth_min(tau_max);
    let reach = if tau_max == 0 { 0.0 } else { kth_min(tau_max - 1) };

    let mut values: Vec<f64> = d
        .entries
        .iter()
        .copied()
        .filter(|&v| v.is_finite() && v < exceed && v <= reach)
        .chain(std::iter::once(0.0))
        .collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    values
}

/// Cap on neighborhood size used when none is given.
pub fn default_tau_max(p: usize) -> usize {
    (p / 2).max(1)
}
