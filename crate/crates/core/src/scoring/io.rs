//! Ensemble CSV files.
//!
//! Two layouts are accepted, selected by the header:
//! - long: `instance_id,kind,value` with `kind` ∈ {`sample`, `obs`}, one row per value;
//! - wide: `instance_id,y,s1,...,sM`, one row per instance.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::Ensemble;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleLayout {
    Long,
    Wide,
}

pub fn read_ensembles(path: &Path) -> Result<Vec<Ensemble<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ensembles_from(file).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::parse(path, msg),
        other => other,
    })
}

pub fn read_ensembles_from(reader: impl Read) -> Result<Vec<Ensemble<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::invalid(e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let layout = detect_layout(&cols)?;
    let records: Vec<csv::StringRecord> = rdr
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::invalid(e.to_string()))?;
    let num = |s: &str, line: usize| {
        s.parse::<f64>()
            .map_err(|_| Error::invalid(format!("record {line}: `{s}` is not a number")))
    };
    match layout {
        EnsembleLayout::Wide => {
            let id_col = position(&cols, "instance_id")?;
            let y_col = position(&cols, "y")?;
            let sample_cols: Vec<usize> = cols
                .iter()
                .enumerate()
                .filter(|(_, c)| is_sample_col(c))
                .map(|(i, _)| i)
                .collect();
            records
                .iter()
                .enumerate()
                .map(|(line, r)| {
                    let samples = sample_cols
                        .iter()
                        .map(|&c| num(&r[c], line + 1))
                        .collect::<Result<Vec<_>>>()?;
                    Ensemble::new(&r[id_col], samples, num(&r[y_col], line + 1)?)
                })
                .collect()
        }
        EnsembleLayout::Long => {
            let id_col = position(&cols, "instance_id")?;
            let kind_col = position(&cols, "kind")?;
            let val_col = position(&cols, "value")?;
            let mut order: Vec<String> = Vec::new();
            let mut acc: HashMap<String, (Vec<f64>, Option<f64>)> = HashMap::new();
            for (line, r) in records.iter().enumerate() {
                let id = r[id_col].to_string();
                let v = num(&r[val_col], line + 1)?;
                let entry = acc.entry(id.clone()).or_insert_with(|| {
                    order.push(id.clone());
                    (Vec::new(), None)
                });
                match &r[kind_col] {
                    "sample" => entry.0.push(v),
                    "obs" => {
                        if entry.1.replace(v).is_some() {
                            return Err(Error::invalid(format!(
                                "instance `{id}` has two observations"
                            )));
                        }
                    }
                    other => {
                        return Err(Error::invalid(format!(
                            "record {}: unknown kind `{other}`",
                            line + 1
                        )))
                    }
                }
            }
            order
                .into_iter()
                .map(|id| {
                    let (samples, obs) = acc.remove(&id).expect("id recorded");
                    let obs = obs.ok_or_else(|| {
                        Error::invalid(format!("instance `{id}` has no observation"))
                    })?;
                    Ensemble::new(id, samples, obs)
                })
                .collect()
        }
    }
}

fn is_sample_col(c: &str) -> bool {
    c.strip_prefix('s')
        .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|ch| ch.is_ascii_digit()))
}

fn position(cols: &[&str], name: &str) -> Result<usize> {
    cols.iter()
        .position(|c| *c == name)
        .ok_or_else(|| Error::invalid(format!("missing column `{name}`")))
}

fn detect_layout(cols: &[&str]) -> Result<EnsembleLayout> {
    if cols.contains(&"kind") && cols.contains(&"value") {
        Ok(EnsembleLayout::Long)
    } else if cols.contains(&"y") && cols.iter().any(|c| is_sample_col(c)) {
        Ok(EnsembleLayout::Wide)
    } else {
        Err(Error::invalid(format!(
            "unrecognised ensemble header `{}`",
            cols.join(",")
        )))
    }
}

pub fn write_ensembles(
    path: &Path,
    ensembles: &[Ensemble<f64>],
    layout: EnsembleLayout,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_ensembles_to(file, ensembles, layout).map_err(|e| Error::parse(path, e))
}

pub fn write_ensembles_to(
    writer: impl Write,
    ensembles: &[Ensemble<f64>],
    layout: EnsembleLayout,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::invalid(e.to_string());
    match layout {
        EnsembleLayout::Wide => {
            let m = ensembles.iter().map(|e| e.len()).max().unwrap_or(0);
            if ensembles.iter().any(|e| e.len() != m) {
                return Err(Error::invalid("wide layout needs equal ensemble sizes"));
            }
            let mut header = vec!["instance_id".to_string(), "y".to_string()];
            header.extend((1..=m).map(|j| format!("s{j}")));
            w.write_record(&header).map_err(err)?;
            for e in ensembles {
                let mut row = vec![e.instance_id().to_string(), e.observation().to_string()];
                row.extend(e.samples().iter().map(|s| s.to_string()));
                w.write_record(&row).map_err(err)?;
            }
        }
        EnsembleLayout::Long => {
            w.write_record(["instance_id", "kind", "value"])
                .map_err(err)?;
            for e in ensembles {
                for s in e.samples() {
                    w.write_record([e.instance_id(), "sample", &s.to_string()])
                        .map_err(err)?;
                }
                w.write_record([e.instance_id(), "obs", &e.observation().to_string()])
                    .map_err(err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::invalid(e.to_string()))
}
