use std::cmp::Ordering;

use crate::{Error, Result, Scalar};

/// Mean absolute error. Absolute errors are sorted before summation, so the
/// result does not depend on record order.
pub fn mae<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "mae: lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::invalid("mae: empty input"));
    }
    let mut err: Vec<T> = x.iter().zip(y).map(|(&a, &b)| (a - b).abs()).collect();
    err.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(err.into_iter().sum::<T>() / T::of_usize(x.len()))
}

/// Change in Kendall tau, in percentage points.
pub fn delta_tau(tau_nonaligned: f64, tau_aligned: f64) -> f64 {
    (tau_aligned - tau_nonaligned) * 100.0
}

/// Number of tied pairs within runs of equal values of a sorted slice.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for k in 1..=sorted.len() {
        if k < sorted.len() && sorted[k] == sorted[k - 1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total
}

/// Sorts `v` and returns the number of inversions (bottom-up merge sort).
fn count_inversions<T: PartialOrd + Copy>(v: &mut Vec<T>) -> u64 {
    let n = v.len();
    let mut buf = v.clone();
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo < n {
            let mid = (lo + width).min(n);
            let hi = (lo + 2 * width).min(n);
            let (mut i, mut j, mut k) = (lo, mid, lo);
            while i < mid && j < hi {
                if v[j] < v[i] {
                    buf[k] = v[j];
                    swaps += (mid - i) as u64;
                    j += 1;
                } else {
                    buf[k] = v[i];
                    i += 1;
                }
                k += 1;
            }
            buf[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
            k += mid - i;
            buf[k..k + (hi - j)].copy_from_slice(&v[j..hi]);
            lo = hi;
        }
        std::mem::swap(v, &mut buf);
        width *= 2;
    }
    swaps
}

/// Kendall's tau-b, computed in `O(n log n)` with Knight's algorithm.
///
/// `tau_b = (n0 − n1 − n2 + n3 − 2·swaps) / sqrt((n0 − n1)(n0 − n2))` where
/// `n1`, `n2` count pairs tied in `x` and `y`, and `n3` pairs tied in both.
pub fn kendall_tau<T: PartialOrd + Copy>(x: &[T], y: &[T]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "kendall_tau: lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid(
            "kendall_tau needs at least two observations",
        ));
    }
    #[allow(clippy::eq_op)]
    if x.iter().chain(y).any(|v| v.partial_cmp(v).is_none()) {
        return Err(Error::invalid("kendall_tau: NaN in input"));
    }
    let mut pairs: Vec<(T, T)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
    });
    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let xs: Vec<T> = pairs.iter().map(|p| p.0).collect();
    let n1 = tied_pairs(&xs);
    let n3 = tied_pairs(&pairs);
    let mut ys: Vec<T> = pairs.iter().map(|p| p.1).collect();
    let swaps = count_inversions(&mut ys);
    let n2 = tied_pairs(&ys);
    if n0 == n1 || n0 == n2 {
        return Err(Error::invalid(
            "kendall_tau is undefined for a constant vector",
        ));
    }
    let s = (n0 + n3) as i64 - (n1 + n2) as i64 - 2 * swaps as i64;
    Ok(s as f64 / (((n0 - n1) as f64) * ((n0 - n2) as f64)).sqrt())
}
