//! Sample-based proper scoring rules for ensemble forecasts.
//!
//! CRPS uses the kernel estimator over `M` samples
//! `(1/M) Σ_j |x_j − y| − (1/2M²) Σ_j Σ_k |x_j − x_k|`,
//! and the threshold-weighted CRPS is the same estimator applied after a
//! monotone chaining function `ν` transforms both samples and observation.

mod chaining;
mod crps;
mod ensemble;
pub mod io;

pub use chaining::{ChainingSpec, MONOTONE_GRID_POINTS};
pub use crps::{
    crps, crps_ensemble, kernel_score_grad, mean_score, twcrps, twcrps_ensemble, KernelGrad,
};
pub use ensemble::Ensemble;
