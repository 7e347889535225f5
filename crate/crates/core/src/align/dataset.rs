use serde::{Deserialize, Serialize};

use crate::scoring::Ensemble;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct DatasetMeta {
    pub source: String,
    pub units: String,
}

/// Triplets (samples, observation, downstream score) sharing one ensemble size.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentDataset<T> {
    records: Vec<(Ensemble<T>, T)>,
    ensemble_size: usize,
    pub meta: DatasetMeta,
}

impl<T: Scalar> AlignmentDataset<T> {
    pub fn new(records: Vec<(Ensemble<T>, T)>, meta: DatasetMeta) -> Result<Self> {
        let Some(first) = records.first() else {
            return Err(Error::invalid("alignment dataset is empty"));
        };
        let m = first.0.len();
        for (ens, s) in &records {
            if ens.len() != m {
                return Err(Error::invalid(format!(
                    "instance `{}` has {} samples, expected {m}",
                    ens.instance_id(),
                    ens.len()
                )));
            }
            if !s.is_finite() {
                return Err(Error::invalid(format!(
                    "instance `{}` has a non-finite downstream score",
                    ens.instance_id()
                )));
            }
        }
        Ok(Self {
            records,
            ensemble_size: m,
            meta,
        })
    }

    /// Pairs ensembles with scores position by position.
    pub fn from_parts(
        ensembles: Vec<Ensemble<T>>,
        scores: Vec<T>,
        meta: DatasetMeta,
    ) -> Result<Self> {
        if ensembles.len() != scores.len() {
            return Err(Error::invalid(format!(
                "{} ensembles but {} scores",
                ensembles.len(),
                scores.len()
            )));
        }
        Self::new(ensembles.into_iter().zip(scores).collect(), meta)
    }

    pub fn records(&self) -> &[(Ensemble<T>, T)] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ensemble_size(&self) -> usize {
        self.ensemble_size
    }

    pub fn scores(&self) -> Vec<T> {
        self.records.iter().map(|(_, s)| *s).collect()
    }

    pub fn ensembles(&self) -> impl Iterator<Item = &Ensemble<T>> {
        self.records.iter().map(|(e, _)| e)
    }

    /// Subset by record indices; panics on an out-of-range index.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Self::new(
            idx.iter().map(|&i| self.records[i].clone()).collect(),
            self.meta.clone(),
        )
    }
}
