use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Monthly demand with trend, yearly seasonality and Gaussian noise, plus a
/// seasonal sale price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemandSpec {
    pub months: usize,
    pub base: f64,
    /// Demand change per month.
    pub slope: f64,
    pub amplitude: f64,
    pub noise: f64,
    pub price_base: f64,
    pub price_amplitude: f64,
    pub price_noise: f64,
    pub seed: u64,
}

impl Default for DemandSpec {
    fn default() -> Self {
        Self {
            months: 168,
            base: 100.0,
            slope: 0.1,
            amplitude: 30.0,
            noise: 12.0,
            price_base: 10.0,
            price_amplitude: 1.0,
            price_noise: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandRow {
    pub month_index: usize,
    pub demand: f64,
    pub price: f64,
}

/// Demand is clamped at 0 and price at 1% of its base level.
pub fn gen_demand_series(spec: &DemandSpec) -> Result<Vec<DemandRow>> {
    if spec.months == 0 {
        return Err(Error::invalid("months must be >= 1"));
    }
    if !(spec.price_base > 0.0) || spec.noise < 0.0 || spec.price_noise < 0.0 {
        return Err(Error::invalid(
            "price_base must be > 0 and noise levels >= 0",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok((0..spec.months)
        .map(|t| {
            let phase = TAU * t as f64 / 12.0;
            let e: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.sample(StandardNormal);
            let demand =
                spec.base + spec.slope * t as f64 + spec.amplitude * phase.sin() + spec.noise * e;
            let price =
                spec.price_base + spec.price_amplitude * (phase + 1.0).cos() + spec.price_noise * u;
            DemandRow {
                month_index: t,
                demand: demand.max(0.0),
                price: price.max(0.01 * spec.price_base),
            }
        })
        .collect())
}
