//! Experiment orchestration: configuration, seeded stage pipelines, run
//! manifests, plotting exports and the command-line front end.

pub mod cli;
pub mod config;
mod experiments;
pub mod export;
mod run;
mod seeds;

pub use config::{
    ConvexToySection, CostRule, DownstreamSection, ExperimentConfig, ExperimentKind, ExportSection,
    ForecastSection,
};
pub use experiments::{
    central_range, chaining_error, convex_toy_nu, convex_toy_target, monotone_report, run_pipeline,
    ExperimentOutput, Metrics, MonotoneReport, Stages, MONOTONE_CHECK_POINTS,
};
pub use export::{export_alignment_curve, export_chaining_grid, AlignmentCurve, CurveRow, GridRow};
pub use run::{
    read_manifest, run_experiment, write_atomic, write_json_atomic, DirLock, RunManifest,
    LOCK_FILE, MANIFEST_FILE, MANIFEST_SCHEMA_VERSION, METRICS_FILE, PARTIAL_MARKER,
};
pub use seeds::stage_seed;
