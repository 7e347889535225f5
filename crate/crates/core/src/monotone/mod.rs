//! Monotone alignment network.
//!
//! `ŝ = h(S(ν(ŷ_1), …, ν(ŷ_M); ν(y)))`, where `ν` is a monotone network
//! applied elementwise to the samples and the observation, `S` is a fixed
//! scoring operator, and `h` is a positive-slope output map. Gradients of the
//! squared alignment loss are computed by hand-written reverse mode for this
//! fixed architecture.

mod activation;
mod dense;
mod net;

pub use activation::{BaseActivation, UnitShape, GELU_ARGMIN};
pub use dense::{DenseCache, MonotoneDense};
pub use net::{
    AlignmentNet, HBlock, HKind, NetConfig, NuBlock, ScoreOperator, CHECKPOINT_FORMAT_VERSION,
};
