//! CSV and JSON formats.
//!
//! * panel: header row of series ids, one row per time step, optionally led
//!   by a `date`/`time`/`timestamp` column.
//! * distance matrix: `p` rows of `p` numbers, no header, `inf` allowed.
//! * layout: `id,x,y[,z]` or `site_id,longitude,latitude`.
//! * adjacency: `p` rows of `p` zeros and ones, no header.
//!
//! Floats are written in shortest round-trip form, so reading back is exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::baselines::LassoPathPoint;
use crate::error::{NvarError, Result};
use crate::estimation::FitReport;
use crate::evaluation::{SummaryTable, TrialResult};
use crate::geometry::{DistanceMatrix, SensorLayout};
use crate::model::SeriesPanel;

const TIME_COLUMNS: [&str; 3] = ["date", "time", "timestamp"];

fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64> {
    let t = field.trim();
    let v = match t.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => f64::INFINITY,
        _ => t.parse().map_err(|_| NvarError::UnparseableRecord {
            line,
            message: format!("{what}: '{t}' is not a number"),
        })?,
    };
    Ok(v)
}

fn reader<R: Read>(r: R, headers: bool) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(headers)
        .trim(csv::Trim::All)
        .from_reader(r)
}

pub fn read_panel_csv<R: Read>(r: R) -> Result<SeriesPanel> {
    let mut rdr = reader(r, true);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let has_time = header
        .first()
        .is_some_and(|h| TIME_COLUMNS.contains(&h.to_ascii_lowercase().as_str()));
    let ids: Vec<String> = header[usize::from(has_time)..].to_vec();
    if ids.is_empty() {
        return Err(NvarError::invalid("panel CSV has no series columns"));
    }
    if ids.iter().any(String::is_empty) {
        return Err(NvarError::invalid("panel CSV has an empty series id"));
    }
    let mut series = vec![Vec::new(); ids.len()];
    let mut stamps = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let offset = usize::from(has_time);
        if row.len() != ids.len() + offset {
            return Err(NvarError::UnparseableRecord {
                line,
                message: format!("expected {} fields, found {}", ids.len() + offset, row.len()),
            });
        }
        if has_time {
            stamps.push(row[0].to_string());
        }
        for (k, s) in series.iter_mut().enumerate() {
            let v = parse_f64(&row[k + offset], line, &ids[k])?;
            if !v.is_finite() {
                return Err(NvarError::UnparseableRecord {
                    line,
                    message: format!("{}: non-finite value", ids[k]),
                });
            }
            s.push(v);
        }
    }
    let panel = SeriesPanel::from_series(ids, series)?;
    if has_time {
        panel.with_timestamps(stamps)
    } else {
        Ok(panel)
    }
}

pub fn write_panel_csv<W: Write>(panel: &SeriesPanel, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let stamps = panel.timestamps();
    let mut header: Vec<&str> = Vec::with_capacity(panel.p() + 1);
    if stamps.is_some() {
        header.push("date");
    }
    header.extend(panel.ids().iter().map(String::as_str));
    wtr.write_record(&header)?;
    for t in 0..panel.n() {
        let mut row: Vec<String> = Vec::with_capacity(panel.p() + 1);
        if let Some(s) = stamps {
            row.push(s[t].clone());
        }
        row.extend((0..panel.p()).map(|i| panel.get(i, t).to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_distance_csv<R: Read>(r: R) -> Result<DistanceMatrix> {
    let mut rows = Vec::new();
    for row in reader(r, false).records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        rows.push(
            row.iter()
                .map(|f| parse_f64(f, line, "distance"))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    DistanceMatrix::from_rows(&rows)
}

pub fn write_distance_csv<W: Write>(d: &DistanceMatrix, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in d.to_rows() {
        wtr.write_record(row.iter().map(|v| {
            if v.is_infinite() {
                "inf".to_string()
            } else {
                v.to_string()
            }
        }))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_layout_csv<R: Read>(r: R) -> Result<SensorLayout> {
    let mut rdr = reader(r, true);
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let dims = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["site_id", "longitude", "latitude"] | ["id", "x", "y"] => 2,
        ["id", "x"] => 1,
        ["id", "x", "y", "z"] => 3,
        _ => {
            return Err(NvarError::UnparseableRecord {
                line: 1,
                message: format!(
                    "layout header must be 'site_id,longitude,latitude' or 'id,x[,y[,z]]', found '{}'",
                    header.join(",")
                ),
            })
        }
    };
    let mut ids = Vec::new();
    let mut coords = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != dims + 1 {
            return Err(NvarError::UnparseableRecord {
                line,
                message: format!("expected {} fields, found {}", dims + 1, row.len()),
            });
        }
        ids.push(row[0].to_string());
        coords.push(
            (1..=dims)
                .map(|k| parse_f64(&row[k], line, "coordinate"))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    SensorLayout::with_coordinates(ids, coords)
}

pub fn write_layout_csv<W: Write>(layout: &SensorLayout, w: W) -> Result<()> {
    let coords = layout
        .coordinates
        .as_ref()
        .ok_or(NvarError::MissingCoordinates)?;
    let mut wtr = csv::Writer::from_writer(w);
    let header = ["id", "x", "y", "z"];
    wtr.write_record(&header[..=layout.dimension().unwrap_or(0)])?;
    for (id, c) in layout.ids.iter().zip(coords) {
        let mut row = vec![id.clone()];
        row.extend(c.iter().map(f64::to_string));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Keep the layout rows whose ids appear in `ids`, in that order.
pub fn layout_for_ids(layout: &SensorLayout, ids: &[String]) -> Result<SensorLayout> {
    let coords = layout
        .coordinates
        .as_ref()
        .ok_or(NvarError::MissingCoordinates)?;
    let picked = ids
        .iter()
        .map(|id| {
            layout
                .ids
                .iter()
                .position(|x| x == id)
                .map(|k| coords[k].clone())
                .ok_or_else(|| NvarError::invalid(format!("no coordinates for series '{id}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    SensorLayout::with_coordinates(ids.to_vec(), picked)
}

pub fn read_adjacency_csv<R: Read>(r: R, ids: Option<Vec<String>>) -> Result<SensorLayout> {
    let mut adj = Vec::new();
    for row in reader(r, false).records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        adj.push(
            row.iter()
                .map(|f| match f {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(NvarError::UnparseableRecord {
                        line,
                        message: format!("adjacency entries must be 0 or 1, found '{other}'"),
                    }),
                })
                .collect::<Result<Vec<bool>>>()?,
        );
    }
    let ids = ids.unwrap_or_else(|| crate::geometry::default_ids(adj.len()));
    SensorLayout::with_adjacency(ids, adj)
}

/// Per-radius BIC of every series; skipped cells are left empty.
pub fn write_bic_table_csv<W: Write>(report: &FitReport, ids: &[String], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["radius".to_string()];
    header.extend(ids.iter().cloned());
    wtr.write_record(&header)?;
    for (r, row) in report.radii.iter().zip(&report.bic_table) {
        let mut rec = vec![r.to_string()];
        rec.extend(row.iter().map(|b| b.map_or(String::new(), |v| v.to_string())));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn write_summary_csv<W: Write>(table: &SummaryTable, w: W) -> Result<()> {
    let max_bins = table.rows.iter().map(|r| r.histogram.len()).max().unwrap_or(0);
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = [
        "case", "p", "d0", "sigma", "n", "method", "reps", "failures", "l2_mean", "l2_sd",
        "frob_mean", "frob_sd",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..max_bins).map(|b| format!("count_d{b}")));
    wtr.write_record(&header)?;
    for r in &table.rows {
        let mut rec = vec![
            r.case.number().to_string(),
            r.p.to_string(),
            r.d0.to_string(),
            r.sigma.to_string(),
            r.n.to_string(),
            r.method.to_string(),
            r.reps.to_string(),
            r.failures.to_string(),
            r.l2_mean.to_string(),
            opt(r.l2_sd),
            r.frob_mean.to_string(),
            opt(r.frob_sd),
        ];
        rec.extend((0..max_bins).map(|b| r.histogram.get(b).map_or(String::new(), |(_, c)| c.to_string())));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Raw per-replication results; the time column is written only if asked.
pub fn write_trials_csv<W: Write>(trials: &[TrialResult], with_time: bool, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["rep", "method", "d_hat", "l2", "frob"];
    if with_time {
        header.push("seconds");
    }
    wtr.write_record(&header)?;
    for t in trials {
        let mut rec = vec![
            t.rep.to_string(),
            t.method.to_string(),
            opt(t.d_hat),
            t.l2.to_string(),
            t.frob.to_string(),
        ];
        if with_time {
            rec.push(t.seconds.to_string());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_lasso_path_csv<W: Write>(path: &[LassoPathPoint], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["series", "lambda", "nonzeros", "bic"])?;
    for pt in path {
        wtr.write_record([
            pt.series.to_string(),
            pt.lambda.to_string(),
            pt.nonzeros.to_string(),
            pt.bic.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize, W: Write>(value: &T, w: W) -> Result<()> {
    let mut w = w;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned, R: Read>(r: R) -> Result<T> {
    Ok(serde_json::from_reader(r)?)
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| {
        NvarError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| {
        NvarError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}
