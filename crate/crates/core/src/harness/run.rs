use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use super::experiments::{run_pipeline, ExperimentOutput, Metrics, Stages};
use crate::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const LOCK_FILE: &str = ".lock";
pub const PARTIAL_MARKER: &str = ".partial";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub library_version: String,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub root_seed: u64,
    /// Seed of every labelled stage.
    pub seeds: BTreeMap<String, u64>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub metrics: Metrics,
    /// Artifact key to file name, relative to the output directory.
    pub artifacts: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

/// Writes `bytes` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json_atomic(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(dir.to_path_buf()))
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Runs the configured experiment and writes artifacts, metrics and the
/// manifest into the output directory.
///
/// On failure the artifacts written so far are kept and a `.partial` marker
/// holding the error is left behind.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let _lock = DirLock::acquire(dir)?;
    let marker = dir.join(PARTIAL_MARKER);
    let mut stages = Stages::new(Some(dir), cfg.seed);
    let start = Instant::now();
    let result =
        run_pipeline(cfg, &mut stages).and_then(|out| finish(cfg, dir, &mut stages, out, start));
    match result {
        Ok(manifest) => {
            if marker.exists() {
                std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
            }
            Ok(manifest)
        }
        Err(e) => {
            let _ = std::fs::write(&marker, format!("{e}\n"));
            Err(e)
        }
    }
}

fn finish(
    cfg: &ExperimentConfig,
    dir: &Path,
    stages: &mut Stages,
    out: ExperimentOutput,
    start: Instant,
) -> Result<RunManifest> {
    stages
        .timings
        .insert("total".into(), start.elapsed().as_secs_f64());
    write_json_atomic(&dir.join(METRICS_FILE), &out.metrics)?;
    stages
        .artifacts
        .insert("metrics".into(), METRICS_FILE.into());
    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: cfg.experiment,
        config: cfg.clone(),
        root_seed: cfg.seed,
        seeds: out.seeds,
        timings: stages.timings.clone(),
        metrics: out.metrics,
        artifacts: stages.artifacts.clone(),
        warnings: out.warnings,
    };
    write_json_atomic(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    if m.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::parse(
            path,
            format!("unsupported manifest schema {}", m.schema_version),
        ));
    }
    Ok(m)
}
