//! Forecast-side CSV files: `x,y` regression data and `month_index,demand,price` series.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DemandRow;
use crate::downstream::io::csv_err;
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct XyRow {
    x: f64,
    y: f64,
}

pub fn write_xy(path: &Path, data: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for &(x, y) in data {
        w.serialize(XyRow { x, y }).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_xy(path: &Path) -> Result<Vec<(f64, f64)>> {
    read_rows::<XyRow>(path)?
        .into_iter()
        .map(|r| {
            if r.x.is_finite() && r.y.is_finite() {
                Ok((r.x, r.y))
            } else {
                Err(Error::parse(path, "non-finite x or y"))
            }
        })
        .collect()
}

pub fn write_demand(path: &Path, rows: &[DemandRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Rows must be ordered by `month_index` without gaps.
pub fn read_demand(path: &Path) -> Result<Vec<DemandRow>> {
    let rows = read_rows::<DemandRow>(path)?;
    for (i, r) in rows.iter().enumerate() {
        if r.month_index != i {
            return Err(Error::parse(
                path,
                format!("row {}: expected month_index {i}", i + 1),
            ));
        }
        if !(r.demand >= 0.0) || !r.demand.is_finite() || !(r.price >= 0.0) || !r.price.is_finite()
        {
            return Err(Error::parse(
                path,
                format!("row {}: demand and price must be finite and >= 0", i + 1),
            ));
        }
    }
    Ok(rows)
}

fn read_rows<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    rdr.deserialize::<R>()
        .map(|r| r.map_err(|e| csv_err(path, e)))
        .collect()
}
