//! Alignment training and evaluation.

mod dataset;
mod metrics;
mod train;

pub use dataset::{AlignmentDataset, DatasetMeta};
pub use metrics::{delta_tau, kendall_tau, mae};
pub use train::{
    infer_alignment, train_alignment, EpochRecord, TrainConfig, TrainOutcome, TrainingTrace,
};
