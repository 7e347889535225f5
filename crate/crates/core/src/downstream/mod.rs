//! Downstream decision scores: the newsvendor program and synthetic twCRPS targets.

pub mod io;
mod newsvendor;
mod synth;

pub use newsvendor::{
    downstream_scores, expected_profit, newsvendor_bayes_act, newsvendor_outcomes,
    newsvendor_profit, DownstreamOutcome, DownstreamTask, Newsvendor, NewsvendorParams,
};
pub use synth::synth_downstream;
