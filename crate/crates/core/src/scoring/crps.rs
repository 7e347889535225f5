use std::cmp::Ordering;

use super::{ChainingSpec, Ensemble};
use crate::{Error, Result, Scalar};

fn sorted_order<T: Scalar>(values: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    idx
}

/// Ensemble CRPS of `samples` against `y`.
///
/// Samples are sorted before any summation, so the result does not depend on
/// their order. The pairwise term uses `Σ_{j<k} |x_j − x_k| = Σ_i x_(i) (2i − M + 1)`
/// over the sorted samples (0-based `i`), which is `O(M log M)`.
pub fn crps<T: Scalar>(samples: &[T], y: T) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::invalid("CRPS needs at least one sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(crps_sorted(&sorted, y))
}

fn crps_sorted<T: Scalar>(sorted: &[T], y: T) -> T {
    let m = sorted.len();
    let mt = T::of_usize(m);
    let abs_dev: T = sorted.iter().map(|&x| (x - y).abs()).sum();
    let spread: T = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| x * (T::of_usize(2 * i + 1) - mt))
        .sum();
    let score = abs_dev / mt - spread / (mt * mt);
    score.max(T::zero())
}

pub fn crps_ensemble<T: Scalar>(ens: &Ensemble<T>) -> Result<T> {
    crps(ens.samples(), ens.observation())
}

/// Threshold-weighted CRPS in kernel form: CRPS of the `ν`-transformed samples
/// and observation.
pub fn twcrps<T: Scalar>(samples: &[T], y: T, spec: &ChainingSpec<T>) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::invalid("twCRPS needs at least one sample"));
    }
    let mut mapped: Vec<T> = samples.iter().map(|&x| spec.eval(x)).collect();
    let y = spec.eval(y);
    if !y.is_finite() || mapped.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(
            "chaining function produced a non-finite value",
        ));
    }
    mapped.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(crps_sorted(&mapped, y))
}

pub fn twcrps_ensemble<T: Scalar>(ens: &Ensemble<T>, spec: &ChainingSpec<T>) -> Result<T> {
    twcrps(ens.samples(), ens.observation(), spec)
}

/// Arithmetic mean of per-instance scores.
pub fn mean_score<T: Scalar>(scores: &[T]) -> Result<T> {
    if scores.is_empty() {
        return Err(Error::invalid("mean of an empty score vector"));
    }
    Ok(scores.iter().copied().sum::<T>() / T::of_usize(scores.len()))
}

/// Kernel score together with its (sub)gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrad<T> {
    pub score: T,
    /// `∂S/∂x_j`, in the original sample order.
    pub d_samples: Vec<T>,
    /// `∂S/∂y`.
    pub d_obs: T,
}

/// Kernel score of already-transformed values and its gradient.
///
/// The subgradient of `|u|` at `u = 0` is taken as 0, so tied samples
/// contribute nothing to each other's gradient.
pub fn kernel_score_grad<T: Scalar>(values: &[T], y: T) -> Result<KernelGrad<T>> {
    let m = values.len();
    if m == 0 {
        return Err(Error::invalid("kernel score needs at least one sample"));
    }
    let mt = T::of_usize(m);
    let order = sorted_order(values);
    let sorted: Vec<T> = order.iter().map(|&i| values[i]).collect();
    let score = crps_sorted(&sorted, y);

    let mut d_samples = vec![T::zero(); m];
    let mut d_obs = T::zero();
    let inv_m = T::one() / mt;
    let inv_m2 = inv_m * inv_m;
    let mut start = 0;
    while start < m {
        let mut end = start + 1;
        while end < m && sorted[end] == sorted[start] {
            end += 1;
        }
        // strictly below minus strictly above
        let balance = T::of_usize(start) - T::of_usize(m - end);
        for &i in &order[start..end] {
            let s = (values[i] - y).sign0();
            d_samples[i] = s * inv_m - balance * inv_m2;
            d_obs = d_obs - s * inv_m;
        }
        start = end;
    }
    Ok(KernelGrad {
        score,
        d_samples,
        d_obs,
    })
}
