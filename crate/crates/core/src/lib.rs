//! Downstream-aligned evaluation of ensemble forecasts.
//!
//! The crate learns a proxy evaluation function for probabilistic forecasts:
//! a threshold-weighted CRPS whose chaining function `ν` and output map `h`
//! are fitted so that the transformed score reproduces observed downstream
//! decision scores.
//!
//! Layout:
//! - [`scoring`]: sample-based CRPS / twCRPS and analytic chaining functions
//! - [`monotone`]: the monotone alignment network with exact gradients
//! - [`align`]: alignment training, inference and rank/distance metrics
//! - [`downstream`]: newsvendor profit and synthetic twCRPS downstream scores
//! - [`forecast`]: synthetic data, Gaussian CRPS regressor, Holt-Winters backtests
//! - [`harness`]: experiment orchestration, configuration, CLI
//!
//! Numerical code is generic over [`Scalar`] (`f32` / `f64`); the `*64`
//! aliases below fix the scalar to `f64`, which is what the harness uses.

pub mod align;
pub mod downstream;
pub mod error;
pub mod forecast;
pub mod harness;
pub mod monotone;
pub mod optim;
pub mod scalar;
pub mod scoring;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Ensemble64 = scoring::Ensemble<f64>;
pub type ChainingSpec64 = scoring::ChainingSpec<f64>;
pub type MonotoneDense64 = monotone::MonotoneDense<f64>;
pub type AlignmentNet64 = monotone::AlignmentNet<f64>;
pub type AlignmentDataset64 = align::AlignmentDataset<f64>;
pub type NewsvendorParams64 = downstream::NewsvendorParams<f64>;

pub type Ensemble32 = scoring::Ensemble<f32>;
pub type AlignmentNet32 = monotone::AlignmentNet<f32>;
