use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// One forecast instance: `M` predictive samples and the realized observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Ensemble<T> {
    instance_id: String,
    samples: Vec<T>,
    observation: T,
}

impl<T: Scalar> Ensemble<T> {
    pub fn new(instance_id: impl Into<String>, samples: Vec<T>, observation: T) -> Result<Self> {
        let instance_id = instance_id.into();
        if samples.is_empty() {
            return Err(Error::invalid(format!(
                "ensemble `{instance_id}` has no samples"
            )));
        }
        if !observation.is_finite() || samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid(format!(
                "ensemble `{instance_id}` has non-finite values"
            )));
        }
        Ok(Self {
            instance_id,
            samples,
            observation,
        })
    }

    pub fn instance_id(&self) -> &str {
        &self.instance_id
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn observation(&self) -> T {
        self.observation
    }

    /// Number of samples `M`.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Applies `f` to every sample and to the observation.
    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(
            self.instance_id.clone(),
            self.samples.iter().map(|&s| f(s)).collect(),
            f(self.observation),
        )
    }

    /// Smallest and largest value among samples and observation.
    pub fn value_range(&self) -> (T, T) {
        self.samples
            .iter()
            .fold((self.observation, self.observation), |(lo, hi), &s| {
                (lo.min(s), hi.max(s))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(Ensemble::<f64>::new("a", vec![], 1.0).is_err());
        assert!(Ensemble::new("a", vec![1.0, f64::NAN], 1.0).is_err());
        assert!(Ensemble::new("a", vec![1.0], f64::INFINITY).is_err());
        let e = Ensemble::new("a", vec![3.0, -1.0], 0.5).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e.value_range(), (-1.0, 3.0));
    }
}
