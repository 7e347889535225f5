use std::path::Path;

use serde::Serialize;

use crate::align::kendall_tau;
use crate::downstream::io::csv_err;
use crate::monotone::AlignmentNet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRow {
    pub z: f64,
    pub nu: f64,
    pub w: f64,
    /// Reference chaining value, when a ground truth is known.
    pub nu_ref: Option<f64>,
    pub w_ref: Option<f64>,
}

/// Tabulates `f` on a uniform grid with central-difference derivatives
/// (one-sided at the endpoints).
pub fn tabulate(
    f: impl Fn(f64) -> f64,
    z_min: f64,
    z_max: f64,
    n_points: usize,
) -> Result<Vec<(f64, f64, f64)>> {
    if !(z_min < z_max) || !z_min.is_finite() || !z_max.is_finite() {
        return Err(Error::invalid(format!(
            "invalid grid range [{z_min}, {z_max}]"
        )));
    }
    if n_points < 3 {
        return Err(Error::invalid("grid needs at least 3 points"));
    }
    let dz = (z_max - z_min) / (n_points - 1) as f64;
    let z: Vec<f64> = (0..n_points)
        .map(|k| {
            if k == n_points - 1 {
                z_max
            } else {
                z_min + k as f64 * dz
            }
        })
        .collect();
    let v: Vec<f64> = z.iter().map(|&x| f(x)).collect();
    Ok((0..n_points)
        .map(|k| {
            let w = if k == 0 {
                (v[1] - v[0]) / dz
            } else if k == n_points - 1 {
                (v[k] - v[k - 1]) / dz
            } else {
                (v[k + 1] - v[k - 1]) / (2.0 * dz)
            };
            (z[k], v[k], w)
        })
        .collect())
}

/// Learned chaining function `ν̂` (output slope folded in) and weight `ŵ = ν̂′`.
pub fn export_chaining_grid(
    net: &AlignmentNet<f64>,
    z_min: f64,
    z_max: f64,
    n_points: usize,
) -> Result<Vec<GridRow>> {
    Ok(tabulate(|z| net.effective_nu(z), z_min, z_max, n_points)?
        .into_iter()
        .map(|(z, nu, w)| GridRow {
            z,
            nu,
            w,
            nu_ref: None,
            w_ref: None,
        })
        .collect())
}

/// Adds reference columns from a known chaining function.
pub fn with_reference(rows: &mut [GridRow], reference: impl Fn(f64) -> f64) -> Result<()> {
    let (Some(first), Some(last)) = (rows.first(), rows.last()) else {
        return Ok(());
    };
    let reference = tabulate(reference, first.z, last.z, rows.len())?;
    for (row, (_, nu, w)) in rows.iter_mut().zip(reference) {
        row.nu_ref = Some(nu);
        row.w_ref = Some(w);
    }
    Ok(())
}

pub fn write_grid(path: &Path, rows: &[GridRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub instance_id: String,
    pub s_x: f64,
    pub s_d: f64,
    /// 1-based ordinal ranks; ties keep input order.
    pub rank_x: usize,
    pub rank_d: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentCurve {
    /// Sorted by `s_x`.
    pub rows: Vec<CurveRow>,
    pub tau: f64,
}

fn ranks(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0; v.len()];
    for (rank, i) in idx.into_iter().enumerate() {
        r[i] = rank + 1;
    }
    r
}

/// Pairs upstream (or aligned) scores with downstream scores for plotting.
pub fn export_alignment_curve(ids: &[String], s_x: &[f64], s_d: &[f64]) -> Result<AlignmentCurve> {
    if s_x.len() != s_d.len() || ids.len() != s_x.len() {
        return Err(Error::invalid(format!(
            "curve inputs differ in length ({} ids, {} s_x, {} s_d)",
            ids.len(),
            s_x.len(),
            s_d.len()
        )));
    }
    let tau = kendall_tau(s_x, s_d)?;
    let (rx, rd) = (ranks(s_x), ranks(s_d));
    let mut rows: Vec<CurveRow> = (0..s_x.len())
        .map(|i| CurveRow {
            instance_id: ids[i].clone(),
            s_x: s_x[i],
            s_d: s_d[i],
            rank_x: rx[i],
            rank_d: rd[i],
        })
        .collect();
    rows.sort_by_key(|r| r.rank_x);
    Ok(AlignmentCurve { rows, tau })
}

/// Writes the curve rows followed by a `kendall_tau` summary row.
pub fn write_curve(path: &Path, curve: &AlignmentCurve) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["instance_id", "s_x", "s_d", "rank_x", "rank_d"])
        .map_err(|e| csv_err(path, e))?;
    for r in &curve.rows {
        w.write_record([
            r.instance_id.clone(),
            r.s_x.to_string(),
            r.s_d.to_string(),
            r.rank_x.to_string(),
            r.rank_d.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.write_record(["kendall_tau", &curve.tau.to_string(), "", "", ""])
        .map_err(|e| csv_err(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monotone::ScoreOperator;

    #[test]
    fn identity_grid_has_unit_weight() {
        let net = AlignmentNet::<f64>::identity(ScoreOperator::TwCrps);
        let rows = export_chaining_grid(&net, -2.0, 3.0, 101).unwrap();
        assert_eq!(rows.len(), 101);
        assert!(rows
            .iter()
            .all(|r| (r.w - 1.0).abs() < 1e-6 && (r.nu - r.z).abs() < 1e-12));
        let tiny = export_chaining_grid(&net, 0.0, 1.0, 3).unwrap();
        assert_eq!(tiny.len(), 3);
        assert!(tiny.iter().all(|r| r.nu.is_finite() && r.w.is_finite()));
        assert!(export_chaining_grid(&net, 1.0, 1.0, 10).is_err());
        assert!(export_chaining_grid(&net, 0.0, 1.0, 2).is_err());
    }

    #[test]
    fn one_sided_endpoints() {
        let rows = tabulate(|z| z * z, 0.0, 2.0, 3).unwrap();
        assert_eq!(
            rows.iter().map(|r| r.2).collect::<Vec<_>>(),
            vec![1.0, 2.0, 3.0]
        );
    }

    #[test]
    fn curve_tau_and_order() {
        let ids: Vec<String> = (0..4).map(|i| i.to_string()).collect();
        let x = [3.0, 1.0, 2.0, 4.0];
        let same = export_alignment_curve(&ids, &x, &x).unwrap();
        assert_eq!(same.tau, 1.0);
        assert_eq!(
            same.rows.iter().map(|r| r.s_x).collect::<Vec<_>>(),
            vec![1.0, 2.0, 3.0, 4.0]
        );
        let rev: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(export_alignment_curve(&ids, &x, &rev).unwrap().tau, -1.0);
        assert!(export_alignment_curve(&ids, &x, &rev[..3]).is_err());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        write_curve(&path, &same).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().last().unwrap().starts_with("kendall_tau,1"));
    }
}
