//! Gauge records to an analysis panel: monthly maxima, the largest fully
//! observed site × month block, centering and the train/test split.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{NvarError, Result};
use crate::evaluation::train_length;
use crate::model::SeriesPanel;

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    pub site_id: String,
    pub date: NaiveDate,
    pub value: f64,
}

/// A record line that was skipped under lenient parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedLine {
    pub line: usize,
    pub message: String,
}

pub const RECORD_HEADER: [&str; 3] = ["site_id", "date", "value"];

/// Parse `site_id,date,value` records. Bad lines are an error unless
/// `lenient`, in which case they are returned alongside the good records.
pub fn read_records<R: Read>(reader: R, lenient: bool) -> Result<(Vec<ObservationRecord>, Vec<SkippedLine>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = rdr.records();
    let header = match rows.next() {
        None => return Ok((Vec::new(), Vec::new())),
        Some(h) => h?,
    };
    let names: Vec<String> = header.iter().map(|s| s.to_ascii_lowercase()).collect();
    if names != RECORD_HEADER {
        return Err(NvarError::UnparseableRecord {
            line: 1,
            message: format!(
                "expected header 'site_id,date,value', found '{}'",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for row in rows {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        match parse_record(&row) {
            Ok(r) => records.push(r),
            Err(message) if lenient => skipped.push(SkippedLine { line, message }),
            Err(message) => return Err(NvarError::UnparseableRecord { line, message }),
        }
    }
    Ok((records, skipped))
}

fn parse_record(row: &csv::StringRecord) -> std::result::Result<ObservationRecord, String> {
    if row.len() != 3 {
        return Err(format!("expected 3 fields, found {}", row.len()));
    }
    let site_id = row[0].to_string();
    if site_id.is_empty() {
        return Err("empty site id".into());
    }
    let date = NaiveDate::parse_from_str(&row[1], "%Y-%m-%d")
        .map_err(|e| format!("bad date '{}': {e}", &row[1]))?;
    let value: f64 = row[2]
        .parse()
        .map_err(|_| format!("bad value '{}'", &row[2]))?;
    if !value.is_finite() {
        return Err(format!("non-finite value '{}'", &row[2]));
    }
    Ok(ObservationRecord {
        site_id,
        date,
        value,
    })
}

/// Months since year 0: `year · 12 + month − 1`.
pub fn month_index(date: NaiveDate) -> i64 {
    date.year() as i64 * 12 + date.month0() as i64
}

pub fn month_label(index: i64) -> String {
    format!("{:04}-{:02}", index.div_euclid(12), index.rem_euclid(12) + 1)
}

/// Site × month grid; `None` marks a month without observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaggedMonthlyGrid {
    pub sites: Vec<String>,
    pub first_month: i64,
    /// `values[site][month − first_month]`.
    pub values: Vec<Vec<Option<f64>>>,
}

impl RaggedMonthlyGrid {
    pub fn months(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn observed(&self, site: usize, month: usize) -> bool {
        self.values[site][month].is_some()
    }
}

/// Maximum of each site's values within each calendar month. Sites are
/// sorted by id; months span the first to the last observed month.
pub fn monthly_max_aggregate(records: &[ObservationRecord]) -> Result<RaggedMonthlyGrid> {
    if records.is_empty() {
        return Err(NvarError::NoCompleteCell);
    }
    let mut cells: BTreeMap<(&str, i64), f64> = BTreeMap::new();
    for r in records {
        let v = cells
            .entry((r.site_id.as_str(), month_index(r.date)))
            .or_insert(f64::NEG_INFINITY);
        *v = v.max(r.value);
    }
    let sites: BTreeSet<&str> = cells.keys().map(|(s, _)| *s).collect();
    let first = cells.keys().map(|(_, m)| *m).min().unwrap_or(0);
    let last = cells.keys().map(|(_, m)| *m).max().unwrap_or(0);
    let months = (last - first + 1) as usize;
    let sites: Vec<String> = sites.into_iter().map(String::from).collect();
    let mut values = vec![vec![None; months]; sites.len()];
    for (s, site) in sites.iter().enumerate() {
        for ((_, m), v) in cells.range((site.as_str(), i64::MIN)..=(site.as_str(), i64::MAX)) {
            values[s][(m - first) as usize] = Some(*v);
        }
    }
    Ok(RaggedMonthlyGrid {
        sites,
        first_month: first,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Indices into the grid's sites, ascending.
    pub sites: Vec<usize>,
    /// First month of the window, as an offset into the grid.
    pub start: usize,
    pub len: usize,
}

impl Selection {
    pub fn score(&self) -> usize {
        self.sites.len() * self.len
    }

    /// Ordering used to pick among candidates: larger `p·n`, then larger
    /// `n`, then earlier start, then the lexicographically smaller site set.
    pub fn better_than(&self, other: &Selection) -> bool {
        use std::cmp::Ordering::*;
        match self.score().cmp(&other.score()) {
            Greater => return true,
            Less => return false,
            Equal => {}
        }
        match self.len.cmp(&other.len) {
            Greater => return true,
            Less => return false,
            Equal => {}
        }
        match self.start.cmp(&other.start) {
            Less => return true,
            Greater => return false,
            Equal => {}
        }
        self.sites < other.sites
    }
}

/// Largest `p · n` block of sites fully observed on a contiguous window.
/// For a fixed window the best site set is every site complete on it, so
/// the scan runs over windows only.
pub fn select_complete_submatrix(grid: &RaggedMonthlyGrid) -> Result<Selection> {
    let t = grid.months();
    let nsites = grid.sites.len();
    // run[s][a]: consecutive observed months of site s starting at a
    let run: Vec<Vec<usize>> = grid
        .values
        .iter()
        .map(|row| {
            let mut r = vec![0; t + 1];
            for a in (0..t).rev() {
                if row[a].is_some() {
                    r[a] = r[a + 1] + 1;
                }
            }
            r
        })
        .collect();
    let mut best: Option<Selection> = None;
    for a in 0..t {
        for len in 1..=t - a {
            let sites: Vec<usize> = (0..nsites).filter(|&s| run[s][a] >= len).collect();
            if sites.is_empty() {
                break;
            }
            let cand = Selection {
                sites,
                start: a,
                len,
            };
            if best.as_ref().is_none_or(|b| cand.better_than(b)) {
                best = Some(cand);
            }
        }
    }
    best.ok_or(NvarError::NoCompleteCell)
}

/// The selected block as a panel, labelled with site ids and `YYYY-MM`.
pub fn selection_panel(grid: &RaggedMonthlyGrid, sel: &Selection) -> Result<SeriesPanel> {
    let ids = sel.sites.iter().map(|&s| grid.sites[s].clone()).collect();
    let series = sel
        .sites
        .iter()
        .map(|&s| {
            grid.values[s][sel.start..sel.start + sel.len]
                .iter()
                .map(|v| v.ok_or(NvarError::NoCompleteCell))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let stamps = (0..sel.len)
        .map(|k| month_label(grid.first_month + (sel.start + k) as i64))
        .collect();
    SeriesPanel::from_series(ids, series)?.with_timestamps(stamps)
}

/// First `⌊fraction · n⌋` columns and the rest; both must hold at least
/// `q + 1` columns.
pub fn split_train_test(panel: &SeriesPanel, fraction: f64, q: usize) -> Result<(SeriesPanel, SeriesPanel)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(NvarError::invalid("train fraction must lie in (0, 1)"));
    }
    let n = panel.n();
    let cut = train_length(n, fraction);
    if cut < q + 1 || n - cut < q + 1 {
        return Err(NvarError::TooShort(format!(
            "split of {n} columns at {cut} leaves a part shorter than q + 1 = {}",
            q + 1
        )));
    }
    Ok((panel.slice_time(0, cut), panel.slice_time(cut, n)))
}

pub fn series_means(panel: &SeriesPanel) -> Vec<f64> {
    (0..panel.p())
        .map(|i| panel.series(i).iter().sum::<f64>() / panel.n() as f64)
        .collect()
}

/// Subtract each series' own mean.
pub fn center_series(panel: &SeriesPanel) -> (SeriesPanel, Vec<f64>) {
    let means = series_means(panel);
    (center_with(panel, &means), means)
}

/// Subtract given per-series means, e.g. training means from a full panel.
pub fn center_with(panel: &SeriesPanel, means: &[f64]) -> SeriesPanel {
    panel.map_values(|i, v| v - means[i])
}

/// Add the means back to a prediction column.
pub fn decenter(column: &[f64], means: &[f64]) -> Vec<f64> {
    column.iter().zip(means).map(|(v, m)| v + m).collect()
}
