use crate::scoring::{twcrps_ensemble, ChainingSpec, Ensemble};
use crate::{Result, Scalar};

/// Downstream scores defined as twCRPS under a fixed chaining function.
pub fn synth_downstream<T: Scalar>(
    forecasts: &[Ensemble<T>],
    spec: &ChainingSpec<T>,
) -> Result<Vec<T>> {
    spec.check_params()?;
    forecasts
        .iter()
        .map(|ens| twcrps_ensemble(ens, spec))
        .collect()
}
