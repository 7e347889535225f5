use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::scoring::Ensemble;
use crate::{Error, Result, Scalar};

/// Per-period economics of a single-period inventory decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewsvendorParams<T> {
    /// Sale price per unit.
    pub p: T,
    /// Procurement cost per unit.
    pub c: T,
    /// Holding cost per unsold unit.
    pub h: T,
}

impl<T: Scalar> NewsvendorParams<T> {
    pub fn new(p: T, c: T, h: T) -> Result<Self> {
        let params = Self { p, c, h };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p", self.p), ("c", self.c), ("h", self.h)] {
            if !v.is_finite() || v < T::zero() {
                return Err(Error::invalid(format!(
                    "newsvendor {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// True when buying never pays off, so the Bayes act is 0.
    pub fn is_degenerate(&self) -> bool {
        self.p <= self.c
    }

    /// Critical fractile `(p − c)/(p + h)` clamped to `[0, 1]`.
    pub fn critical_fractile(&self) -> T {
        if self.is_degenerate() {
            return T::zero();
        }
        ((self.p - self.c) / (self.p + self.h)).min(T::one())
    }
}

/// A decision problem scored by realized profit.
pub trait DownstreamTask<T: Scalar> {
    type Params;

    /// Action maximizing the sample-average profit.
    fn bayes_act(&self, samples: &[T], params: &Self::Params) -> Result<T>;

    fn profit(&self, action: T, outcome: T, params: &Self::Params) -> Result<T>;

    /// Realized profit of the Bayes act under the ensemble's observation.
    fn score(&self, ens: &Ensemble<T>, params: &Self::Params) -> Result<(T, T)> {
        let a = self.bayes_act(ens.samples(), params)?;
        Ok((a, self.profit(a, ens.observation(), params)?))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Newsvendor;

impl<T: Scalar> DownstreamTask<T> for Newsvendor {
    type Params = NewsvendorParams<T>;

    fn bayes_act(&self, samples: &[T], params: &Self::Params) -> Result<T> {
        newsvendor_bayes_act(samples, params)
    }

    fn profit(&self, action: T, outcome: T, params: &Self::Params) -> Result<T> {
        newsvendor_profit(action, outcome, params)
    }
}

/// `p·min(d, a) − c·a − h·(a − d)⁺`.
pub fn newsvendor_profit<T: Scalar>(a: T, d: T, params: &NewsvendorParams<T>) -> Result<T> {
    if !(a >= T::zero()) || !a.is_finite() {
        return Err(Error::invalid(format!(
            "action must be finite and >= 0, got {a}"
        )));
    }
    if !(d >= T::zero()) || !d.is_finite() {
        return Err(Error::invalid(format!(
            "demand must be finite and >= 0, got {d}"
        )));
    }
    Ok(params.p * d.min(a) - params.c * a - params.h * (a - d).max(T::zero()))
}

/// Mean profit of action `a` over the demand samples, summed in sorted order.
pub fn expected_profit<T: Scalar>(a: T, samples: &[T], params: &NewsvendorParams<T>) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::invalid("no demand samples"));
    }
    let mut profits = samples
        .iter()
        .map(|&d| newsvendor_profit(a, d, params))
        .collect::<Result<Vec<T>>>()?;
    profits.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));
    Ok(profits.into_iter().sum::<T>() / T::of_usize(samples.len()))
}

/// Bayes act of the empirical demand distribution.
///
/// The mean profit is concave and piecewise linear with right slope
/// `(p − c) − (p + h)·F(a)`, so the smallest maximizer is the smallest order
/// statistic `x_(k)` with `k·(p + h) ≥ M·(p − c)`, or 0 when `p ≤ c`.
pub fn newsvendor_bayes_act<T: Scalar>(samples: &[T], params: &NewsvendorParams<T>) -> Result<T> {
    params.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("no demand samples"));
    }
    if let Some(bad) = samples
        .iter()
        .find(|v| !(**v >= T::zero()) || !v.is_finite())
    {
        return Err(Error::invalid(format!(
            "demand samples must be finite and >= 0, got {bad}"
        )));
    }
    if params.is_degenerate() {
        return Ok(T::zero());
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let m = T::of_usize(sorted.len());
    let need = m * (params.p - params.c);
    let total = params.p + params.h;
    let k = (1..=sorted.len())
        .find(|&k| T::of_usize(k) * total >= need)
        .unwrap_or(sorted.len());
    Ok(sorted[k - 1])
}

/// One scored instance: action taken and realized profit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamOutcome<T> {
    pub instance_id: String,
    pub s_d: T,
    pub action: T,
    pub params: NewsvendorParams<T>,
}

/// Newsvendor outcome per instance, with per-instance parameters.
pub fn newsvendor_outcomes<T: Scalar>(
    forecasts: &[Ensemble<T>],
    params: &[NewsvendorParams<T>],
) -> Result<Vec<DownstreamOutcome<T>>> {
    if forecasts.len() != params.len() {
        return Err(Error::invalid(format!(
            "{} forecasts but {} parameter rows",
            forecasts.len(),
            params.len()
        )));
    }
    forecasts
        .iter()
        .zip(params)
        .map(|(ens, pr)| {
            let (action, s_d) = Newsvendor.score(ens, pr).map_err(|e| match e {
                Error::InvalidInput(msg) => {
                    Error::invalid(format!("instance `{}`: {msg}", ens.instance_id()))
                }
                other => other,
            })?;
            Ok(DownstreamOutcome {
                instance_id: ens.instance_id().to_string(),
                s_d,
                action,
                params: *pr,
            })
        })
        .collect()
}

/// Realized profit of the Bayes act for each instance.
pub fn downstream_scores<T: Scalar>(
    forecasts: &[Ensemble<T>],
    params: &[NewsvendorParams<T>],
) -> Result<Vec<T>> {
    Ok(newsvendor_outcomes(forecasts, params)?
        .into_iter()
        .map(|o| o.s_d)
        .collect())
}
