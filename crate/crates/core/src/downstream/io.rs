//! Downstream CSV files.
//!
//! Scores: `instance_id,s_d,action,p,c,h`. Parameters: `p,c,h`, one row per period.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DownstreamOutcome, NewsvendorParams};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct ScoreRow {
    instance_id: String,
    s_d: f64,
    #[serde(default)]
    action: Option<f64>,
    #[serde(default)]
    p: Option<f64>,
    #[serde(default)]
    c: Option<f64>,
    #[serde(default)]
    h: Option<f64>,
}

/// A downstream score as read back from disk; economics are absent for
/// synthetic scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub instance_id: String,
    pub s_d: f64,
    pub action: Option<f64>,
    pub params: Option<NewsvendorParams<f64>>,
}

impl From<&DownstreamOutcome<f64>> for ScoreRecord {
    fn from(o: &DownstreamOutcome<f64>) -> Self {
        Self {
            instance_id: o.instance_id.clone(),
            s_d: o.s_d,
            action: Some(o.action),
            params: Some(o.params),
        }
    }
}

pub fn write_scores(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in records {
        w.serialize(ScoreRow {
            instance_id: r.instance_id.clone(),
            s_d: r.s_d,
            action: r.action,
            p: r.params.map(|p| p.p),
            c: r.params.map(|p| p.c),
            h: r.params.map(|p| p.h),
        })
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<ScoreRow>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        if !row.s_d.is_finite() {
            return Err(Error::parse(
                path,
                format!("instance `{}`: non-finite s_d", row.instance_id),
            ));
        }
        let params = match (row.p, row.c, row.h) {
            (Some(p), Some(c), Some(h)) => {
                Some(NewsvendorParams::new(p, c, h).map_err(|e| Error::parse(path, e))?)
            }
            (None, None, None) => None,
            _ => return Err(Error::parse(path, "p, c and h must be given together")),
        };
        out.push(ScoreRecord {
            instance_id: row.instance_id,
            s_d: row.s_d,
            action: row.action,
            params,
        });
    }
    Ok(out)
}

pub fn write_params(path: &Path, params: &[NewsvendorParams<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for p in params {
        w.serialize(p).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_params(path: &Path) -> Result<Vec<NewsvendorParams<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    rdr.deserialize::<NewsvendorParams<f64>>()
        .map(|row| {
            let p = row.map_err(|e| csv_err(path, e))?;
            p.validate().map_err(|e| Error::parse(path, e))?;
            Ok(p)
        })
        .collect()
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, format!("{other:?}")),
        }
    } else {
        Error::parse(path, e)
    }
}
