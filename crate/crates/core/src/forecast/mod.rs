//! Upstream forecasts: synthetic regression data, a Gaussian CRPS regressor,
//! and Holt-Winters backtests on monthly demand.

mod demand;
mod holt_winters;
pub mod io;
mod regressor;
mod synth;

pub use demand::{gen_demand_series, DemandRow, DemandSpec};
pub use holt_winters::{exp_smoothing_backtest, fit_holt_winters, BacktestConfig, HoltWinters};
pub use regressor::{
    train_regressor, GaussianRegressor, RegressorConfig, RegressorFit, SIGMA_FLOOR,
};
pub use synth::{gen_synth_data, NoiseKind, SynthDataSpec, SynthKind};
