use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::monotone::AlignmentNet;
use crate::{Error, Result, Scalar};

/// Grid size used by [`ChainingSpec::validate_monotone`].
pub const MONOTONE_GRID_POINTS: usize = 1024;

/// A chaining function `ν`, applied to samples and observation before scoring.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
#[serde(bound(
    deserialize = "T: Scalar + Deserialize<'de>",
    serialize = "T: Scalar + Serialize"
))]
pub enum ChainingSpec<T> {
    Identity,
    /// `max(z, t)`
    Threshold {
        t: T,
    },
    /// `min(max(z, a), b)`
    Interval {
        a: T,
        b: T,
    },
    /// `(z − t) Φ_{μ,σ}(z) + σ² φ_{μ,σ}(z)`
    Gaussian {
        t: T,
        mu: T,
        sigma: T,
    },
    /// `Σ_i c_i · sigmoid(a_i z + b_i) + d_i`
    SumSigmoids {
        a: Vec<T>,
        b: Vec<T>,
        c: Vec<T>,
        d: Vec<T>,
    },
    /// Effective chaining function of a trained alignment network.
    #[serde(skip)]
    LearnedNu(Arc<AlignmentNet<T>>),
}

impl<T: Scalar> ChainingSpec<T> {
    pub fn threshold(t: T) -> Self {
        ChainingSpec::Threshold { t }
    }

    pub fn interval(a: T, b: T) -> Result<Self> {
        let spec = ChainingSpec::Interval { a, b };
        spec.check_params()?;
        Ok(spec)
    }

    pub fn gaussian(t: T, mu: T, sigma: T) -> Result<Self> {
        let spec = ChainingSpec::Gaussian { t, mu, sigma };
        spec.check_params()?;
        Ok(spec)
    }

    pub fn sum_sigmoids(a: Vec<T>, b: Vec<T>, c: Vec<T>, d: Vec<T>) -> Result<Self> {
        let spec = ChainingSpec::SumSigmoids { a, b, c, d };
        spec.check_params()?;
        Ok(spec)
    }

    pub fn learned(net: AlignmentNet<T>) -> Self {
        ChainingSpec::LearnedNu(Arc::new(net))
    }

    /// Parameter invariants of each family (not monotonicity).
    pub fn check_params(&self) -> Result<()> {
        let finite = |v: &[T]| v.iter().all(|x| x.is_finite());
        match self {
            ChainingSpec::Identity | ChainingSpec::LearnedNu(_) => Ok(()),
            ChainingSpec::Threshold { t } => {
                if t.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("threshold must be finite"))
                }
            }
            ChainingSpec::Interval { a, b } => {
                if finite(&[*a, *b]) && a < b {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "interval chaining requires a < b, got a={a}, b={b}"
                    )))
                }
            }
            ChainingSpec::Gaussian { t, mu, sigma } => {
                if finite(&[*t, *mu, *sigma]) && *sigma > T::zero() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "gaussian chaining requires sigma > 0, got {sigma}"
                    )))
                }
            }
            ChainingSpec::SumSigmoids { a, b, c, d } => {
                let n = a.len();
                if n == 0 || b.len() != n || c.len() != n || d.len() != n {
                    return Err(Error::invalid(
                        "sum-of-sigmoids parameters must be non-empty and of equal length",
                    ));
                }
                if [a, b, c, d].iter().all(|v| finite(v)) {
                    Ok(())
                } else {
                    Err(Error::invalid("sum-of-sigmoids parameters must be finite"))
                }
            }
        }
    }

    pub fn eval(&self, z: T) -> T {
        match self {
            ChainingSpec::Identity => z,
            ChainingSpec::Threshold { t } => z.max(*t),
            ChainingSpec::Interval { a, b } => z.max(*a).min(*b),
            ChainingSpec::Gaussian { t, mu, sigma } => {
                let u = (z - *mu) / *sigma;
                (z - *t) * u.norm_cdf() + *sigma * u.norm_pdf()
            }
            ChainingSpec::SumSigmoids { a, b, c, d } => a
                .iter()
                .zip(b)
                .zip(c)
                .zip(d)
                .map(|(((&a, &b), &c), &d)| c / (T::one() + (-(a * z + b)).exp()) + d)
                .sum(),
            ChainingSpec::LearnedNu(net) => net.effective_nu(z),
        }
    }

    /// Checks that `ν` is nondecreasing on a uniform grid over `[lo, hi]`.
    ///
    /// A decrease larger than `1e-12` times the largest magnitude seen on the
    /// grid is reported as an error naming the offending point.
    pub fn validate_monotone(&self, lo: T, hi: T) -> Result<()> {
        if !(lo < hi) {
            return Err(Error::invalid("monotonicity range requires lo < hi"));
        }
        let n = MONOTONE_GRID_POINTS;
        let step = (hi - lo) / T::of_usize(n - 1);
        let vals: Vec<T> = (0..n)
            .map(|k| self.eval(lo + step * T::of_usize(k)))
            .collect();
        let scale = vals.iter().fold(T::one(), |m, v| m.max(v.abs()));
        let tol = T::of(1e-12) * scale;
        for k in 1..n {
            if !(vals[k] - vals[k - 1] >= -tol) {
                let z = lo + step * T::of_usize(k);
                return Err(Error::invalid(format!(
                    "chaining function decreases near z = {z} ({} -> {})",
                    vals[k - 1],
                    vals[k]
                )));
            }
        }
        Ok(())
    }

    /// Parameter check followed by the monotonicity check on `[lo, hi]`.
    pub fn validated(self, lo: T, hi: T) -> Result<Self> {
        self.check_params()?;
        self.validate_monotone(lo, hi)?;
        Ok(self)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ChainingSpec::Identity => "identity",
            ChainingSpec::Threshold { .. } => "threshold",
            ChainingSpec::Interval { .. } => "interval",
            ChainingSpec::Gaussian { .. } => "gaussian",
            ChainingSpec::SumSigmoids { .. } => "sum_sigmoids",
            ChainingSpec::LearnedNu(_) => "learned",
        }
    }
}

impl ChainingSpec<f64> {
    /// Sum of sigmoids with the four-term parameter set used in the synthetic experiments.
    pub fn default_sum_sigmoids() -> Self {
        ChainingSpec::SumSigmoids {
            a: vec![0.0, 5.0, 1.0, 2.0],
            b: vec![2.0, 10.0, 20.0, -1.0],
            c: vec![1.0, 4.0, 2.0, 5.0],
            d: vec![0.0, 0.0, 0.0, 0.0],
        }
    }

    /// Parses compact command-line forms such as `threshold:0.5`,
    /// `interval:-0.5,1.5`, `gaussian:0.5,0,1`, `sum_sigmoids` or `identity`.
    pub fn parse_compact(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let nums: Vec<f64> = if args.is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::invalid(format!("chaining `{s}`: {e}")))?
        };
        let spec = match (name, nums.as_slice()) {
            ("identity", []) => ChainingSpec::Identity,
            ("threshold", [t]) => ChainingSpec::threshold(*t),
            ("interval", [a, b]) => ChainingSpec::interval(*a, *b)?,
            ("gaussian", [t, mu, sigma]) => ChainingSpec::gaussian(*t, *mu, *sigma)?,
            ("sum_sigmoids", []) => ChainingSpec::default_sum_sigmoids(),
            _ => return Err(Error::invalid(format!("unrecognised chaining `{s}`"))),
        };
        spec.check_params()?;
        Ok(spec)
    }
}
