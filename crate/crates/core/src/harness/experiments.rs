use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use super::export::{
    export_alignment_curve, export_chaining_grid, with_reference, write_curve, write_grid,
};
use super::seeds::stage_seed;
use crate::align::{
    delta_tau, infer_alignment, kendall_tau, mae, train_alignment, AlignmentDataset, DatasetMeta,
};
use crate::downstream::io::{write_params, write_scores, ScoreRecord};
use crate::downstream::{newsvendor_outcomes, synth_downstream};
use crate::forecast::io::{read_demand, write_demand, write_xy};
use crate::forecast::{
    exp_smoothing_backtest, gen_demand_series, gen_synth_data, train_regressor, SynthDataSpec,
};
use crate::monotone::{AlignmentNet, HBlock, ScoreOperator};
use crate::scoring::io::{write_ensembles, EnsembleLayout};
use crate::scoring::{crps_ensemble, ChainingSpec, Ensemble};
use crate::{Error, Result};

/// Grid used by the monotonicity check on learned chaining functions.
pub const MONOTONE_CHECK_POINTS: usize = 1000;

/// Metric summary of one run; serialized as the run's metrics file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub experiment: ExperimentKind,
    pub mae: f64,
    pub tau_nonaligned: f64,
    pub tau_aligned: f64,
    pub delta_tau: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Experiment-specific diagnostics.
    pub extra: BTreeMap<String, f64>,
    pub config_echo: ExperimentConfig,
}

/// Monotonicity diagnostics for a trained network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotoneReport {
    /// Smallest consecutive difference of `ν̂` on the check grid.
    pub min_step: f64,
    /// Effective output slope for an affine `h`.
    pub h_slope: Option<f64>,
    pub min_effective_weight: f64,
}

impl MonotoneReport {
    pub fn holds(&self) -> bool {
        self.min_step >= -1e-9
            && self.h_slope.is_none_or(|w| w > 0.0)
            && self.min_effective_weight >= 0.0
    }
}

pub fn monotone_report(net: &AlignmentNet<f64>, lo: f64, hi: f64) -> MonotoneReport {
    let n = MONOTONE_CHECK_POINTS;
    let step = (hi - lo) / (n - 1) as f64;
    let values: Vec<f64> = (0..n).map(|k| net.nu(lo + k as f64 * step)).collect();
    let min_step = values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let min_effective_weight = net
        .effective_weights()
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    MonotoneReport {
        min_step,
        h_slope: match net.h_block() {
            HBlock::Affine { log_w, .. } => Some(log_w.exp()),
            HBlock::Monotone { .. } => None,
        },
        min_effective_weight,
    }
}

/// Everything a run produced, before it is written to disk.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub metrics: Metrics,
    pub seeds: BTreeMap<String, u64>,
    pub warnings: Vec<String>,
    pub net: AlignmentNet<f64>,
    pub monotone: MonotoneReport,
    /// Alignment test set (target scores are in the alignment orientation).
    pub test: AlignmentDataset<f64>,
    pub test_predictions: Vec<f64>,
    /// Value range of the alignment data, used for grids.
    pub data_range: (f64, f64),
}

/// Stage bookkeeping: timings, artifact files and error context.
#[derive(Debug, Default)]
pub struct Stages {
    dir: Option<PathBuf>,
    pub timings: BTreeMap<String, f64>,
    pub artifacts: BTreeMap<String, String>,
    seeds: BTreeMap<String, u64>,
    root: u64,
}

impl Stages {
    /// `dir = None` runs the pipeline without writing artifacts.
    pub fn new(dir: Option<&Path>, root_seed: u64) -> Self {
        Self {
            dir: dir.map(Path::to_path_buf),
            root: root_seed,
            ..Self::default()
        }
    }

    fn seed(&mut self, label: &str) -> u64 {
        let s = stage_seed(self.root, label);
        self.seeds.insert(label.to_string(), s);
        s
    }

    fn run<R>(&mut self, name: &str, f: impl FnOnce() -> Result<R>) -> Result<R> {
        let start = Instant::now();
        let out = f().map_err(|e| Error::Stage {
            stage: name.to_string(),
            source: Box::new(e),
        });
        *self.timings.entry(name.to_string()).or_default() += start.elapsed().as_secs_f64();
        out
    }

    fn artifact(
        &mut self,
        key: &str,
        file: &str,
        write: impl FnOnce(&Path) -> Result<()>,
    ) -> Result<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let path = dir.join(file);
        write(&path).map_err(|e| Error::Stage {
            stage: format!("write {file}"),
            source: Box::new(e),
        })?;
        self.artifacts.insert(key.to_string(), file.to_string());
        Ok(())
    }
}

pub fn run_pipeline(cfg: &ExperimentConfig, stages: &mut Stages) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut out = match cfg.experiment {
        ExperimentKind::SyntheticDownstream => synthetic(cfg, stages)?,
        ExperimentKind::Inventory => inventory(cfg, stages)?,
        ExperimentKind::ConvexToy => convex_toy(cfg, stages)?,
    };
    out.seeds = stages.seeds.clone();
    Ok(out)
}

fn value_range<'a>(ens: impl Iterator<Item = &'a Ensemble<f64>>) -> (f64, f64) {
    ens.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
        let (a, b) = e.value_range();
        (lo.min(a), hi.max(b))
    })
}

/// Central `1 − 2·trim` share of `[lo, hi]`.
pub fn central_range((lo, hi): (f64, f64), trim: f64) -> (f64, f64) {
    let r = hi - lo;
    (lo + trim * r, hi - trim * r)
}

/// Largest deviation of `ν̂` from a reference after removing the best
/// (least-squares) additive constant, relative to the reference's range.
/// Returns `(max_rel, rms_rel)`.
pub fn chaining_error(
    learned: impl Fn(f64) -> f64,
    reference: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> (f64, f64) {
    let z: Vec<f64> = (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect();
    let r: Vec<f64> = z.iter().map(|&x| reference(x)).collect();
    let d: Vec<f64> = z.iter().zip(&r).map(|(&x, &v)| learned(x) - v).collect();
    let c = d.iter().sum::<f64>() / n as f64;
    let range = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - r.iter().cloned().fold(f64::INFINITY, f64::min);
    let range = if range > 0.0 { range } else { 1.0 };
    let max = d.iter().map(|v| (v - c).abs()).fold(0.0, f64::max);
    let rms = (d.iter().map(|v| (v - c) * (v - c)).sum::<f64>() / n as f64).sqrt();
    (max / range, rms / range)
}

struct AlignInputs {
    fit: AlignmentDataset<f64>,
    test: AlignmentDataset<f64>,
    /// Upstream (CRPS) score of each test instance.
    upstream_test: Vec<f64>,
    reference: Option<ChainingSpec<f64>>,
    operator: ScoreOperator,
    extra: BTreeMap<String, f64>,
    warnings: Vec<String>,
}

fn align_and_evaluate(
    cfg: &ExperimentConfig,
    st: &mut Stages,
    inp: AlignInputs,
) -> Result<ExperimentOutput> {
    let mut train_cfg = cfg.align.clone();
    train_cfg.seed = st.seed("align");
    train_cfg.net.operator = inp.operator;
    let outcome = st.run("align-train", || train_alignment(&inp.fit, &train_cfg))?;
    let net = outcome.net;
    st.artifact("checkpoint", "alignment_net.json", |p| {
        net.save_checkpoint(p)
    })?;
    st.artifact("trace", "training_trace.csv", |p| {
        outcome.trace.write_csv(p)
    })?;

    let (preds, test_mae) = st.run("align-eval", || infer_alignment(&net, &inp.test))?;
    let targets = inp.test.scores();
    let tau_aligned = st.run("align-eval", || kendall_tau(&preds, &targets))?;
    let tau_nonaligned = st.run("align-eval", || kendall_tau(&inp.upstream_test, &targets))?;

    let mut extra = inp.extra;
    let mut warnings = inp.warnings;
    let data_range = value_range(inp.fit.ensembles().chain(inp.test.ensembles()));
    let report = monotone_report(&net, data_range.0, data_range.1);
    if !report.holds() {
        warnings.push(format!(
            "learned chaining function violates monotonicity: {report:?}"
        ));
    }
    extra.insert("nu_min_step".into(), report.min_step);
    extra.insert("min_effective_weight".into(), report.min_effective_weight);
    if let Some(w) = report.h_slope {
        extra.insert("h_slope".into(), w);
    }
    let std = {
        let m = targets.iter().sum::<f64>() / targets.len() as f64;
        (targets.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / targets.len() as f64).sqrt()
    };
    extra.insert("target_std_test".into(), std);
    extra.insert(
        "mae_over_std".into(),
        if std > 0.0 { test_mae / std } else { f64::NAN },
    );
    extra.insert("mae_nonaligned".into(), mae(&inp.upstream_test, &targets)?);
    if let Some(last) = outcome.trace.epochs.last() {
        extra.insert("final_train_loss".into(), last.train_loss);
        extra.insert("epochs_run".into(), last.epoch as f64);
    }
    if let Some(reference) = &inp.reference {
        let (lo, hi) = central_range(data_range, 0.05);
        let (max_err, rms_err) =
            chaining_error(|z| net.effective_nu(z), |z| reference.eval(z), lo, hi, 1000);
        extra.insert("nu_max_error_rel".into(), max_err);
        extra.insert("nu_rms_error_rel".into(), rms_err);
    }

    let ids: Vec<String> = inp
        .test
        .ensembles()
        .map(|e| e.instance_id().to_string())
        .collect();
    let curve = export_alignment_curve(&ids, &preds, &targets)?;
    st.artifact("curve_aligned", "curve_aligned.csv", |p| {
        write_curve(p, &curve)
    })?;
    let curve_up = export_alignment_curve(&ids, &inp.upstream_test, &targets)?;
    st.artifact("curve_nonaligned", "curve_nonaligned.csv", |p| {
        write_curve(p, &curve_up)
    })?;
    let mut grid = export_chaining_grid(&net, data_range.0, data_range.1, cfg.export.grid_points)?;
    if let Some(reference) = &inp.reference {
        with_reference(&mut grid, |z| reference.eval(z))?;
    }
    st.artifact("chaining_grid", "chaining_grid.csv", |p| {
        write_grid(p, &grid)
    })?;

    let metrics = Metrics {
        experiment: cfg.experiment,
        mae: test_mae,
        tau_nonaligned,
        tau_aligned,
        delta_tau: delta_tau(tau_nonaligned, tau_aligned),
        n_train: inp.fit.len(),
        n_test: inp.test.len(),
        seed: cfg.seed,
        extra,
        config_echo: cfg.clone(),
    };
    Ok(ExperimentOutput {
        metrics,
        seeds: BTreeMap::new(),
        warnings,
        net,
        monotone: report,
        test: inp.test,
        test_predictions: preds,
        data_range,
    })
}

fn meta(source: &str, units: &str) -> DatasetMeta {
    DatasetMeta {
        source: source.into(),
        units: units.into(),
    }
}

fn synthetic(cfg: &ExperimentConfig, st: &mut Stages) -> Result<ExperimentOutput> {
    let f = &cfg.forecast;
    let spec = SynthDataSpec {
        kind: f.kind,
        noise: f.noise,
        n_points: f.n_points,
        seed: st.seed("data"),
    };
    let data = st.run("generate", || gen_synth_data(&spec))?;
    st.artifact("data", "data.csv", |p| write_xy(p, &data))?;

    let n_train = ((f.n_points as f64 * f.train_fraction).round() as usize).max(1);
    let n_val = ((f.n_points as f64 * f.val_fraction).round() as usize).max(1);
    if n_train + n_val >= f.n_points {
        return Err(Error::Config("forecast split leaves no test points".into()));
    }
    let (train, rest) = data.split_at(n_train);
    let (val, test) = rest.split_at(n_val);

    let mut reg_cfg = f.regressor.clone();
    reg_cfg.seed = st.seed("regressor");
    let fit = st.run("forecast-train", || train_regressor(train, &reg_cfg))?;
    st.artifact("regressor", "regressor.json", |p| fit.model.save(p))?;
    let (s_val, s_test) = (st.seed("predict-val"), st.seed("predict-test"));
    let val_ens = st.run("forecast", || {
        fit.model.predict_ensembles(val, f.ensemble_size, s_val)
    })?;
    let test_ens = st.run("forecast", || {
        fit.model.predict_ensembles(test, f.ensemble_size, s_test)
    })?;
    st.artifact("ensembles_align", "ensembles_align.csv", |p| {
        write_ensembles(p, &val_ens, EnsembleLayout::Wide)
    })?;
    st.artifact("ensembles_test", "ensembles_test.csv", |p| {
        write_ensembles(p, &test_ens, EnsembleLayout::Wide)
    })?;

    let chaining = cfg.downstream.chaining.clone();
    let mut warnings = Vec::new();
    let (lo, hi) = value_range(val_ens.iter().chain(&test_ens));
    if let Err(e) = chaining.validate_monotone(lo, hi) {
        warnings.push(format!("reference chaining function: {e}"));
    }
    let sd_val = st.run("downstream", || synth_downstream(&val_ens, &chaining))?;
    let sd_test = st.run("downstream", || synth_downstream(&test_ens, &chaining))?;
    let records = |ens: &[Ensemble<f64>], s: &[f64]| -> Vec<ScoreRecord> {
        ens.iter()
            .zip(s)
            .map(|(e, &s_d)| ScoreRecord {
                instance_id: e.instance_id().to_string(),
                s_d,
                action: None,
                params: None,
            })
            .collect()
    };
    st.artifact("scores_align", "scores_align.csv", |p| {
        write_scores(p, &records(&val_ens, &sd_val))
    })?;
    st.artifact("scores_test", "scores_test.csv", |p| {
        write_scores(p, &records(&test_ens, &sd_test))
    })?;

    let upstream_test = test_ens
        .iter()
        .map(crps_ensemble)
        .collect::<Result<Vec<_>>>()?;
    let mut extra = BTreeMap::new();
    extra.insert(
        "regressor_final_crps".into(),
        *fit.epoch_loss.last().unwrap_or(&f64::NAN),
    );
    let fit_set =
        AlignmentDataset::from_parts(val_ens, sd_val, meta("synthetic_downstream", "twcrps"))?;
    let test_set =
        AlignmentDataset::from_parts(test_ens, sd_test, meta("synthetic_downstream", "twcrps"))?;
    align_and_evaluate(
        cfg,
        st,
        AlignInputs {
            fit: fit_set,
            test: test_set,
            upstream_test,
            reference: Some(chaining),
            operator: ScoreOperator::TwCrps,
            extra,
            warnings,
        },
    )
}

fn inventory(cfg: &ExperimentConfig, st: &mut Stages) -> Result<ExperimentOutput> {
    let f = &cfg.forecast;
    let rows = match &f.demand_csv {
        Some(path) => st.run("generate", || read_demand(path))?,
        None => {
            let mut spec = f.demand.clone();
            spec.seed = st.seed("demand");
            st.run("generate", || gen_demand_series(&spec))?
        }
    };
    st.artifact("demand", "demand.csv", |p| write_demand(p, &rows))?;
    let series: Vec<f64> = rows.iter().map(|r| r.demand).collect();

    let mut bt = f.backtest.clone();
    bt.seed = st.seed("backtest");
    let ensembles = st.run("forecast", || exp_smoothing_backtest(&series, &bt))?;
    if ensembles.len() <= f.test_months {
        return Err(Error::Config(format!(
            "backtest yields {} ensembles, not enough for {} test months",
            ensembles.len(),
            f.test_months
        )));
    }
    let d = &cfg.downstream;
    let params = st.run("downstream", || {
        ensembles
            .iter()
            .map(|e| {
                let t: usize = e
                    .instance_id()
                    .parse()
                    .map_err(|_| Error::invalid("bad month id"))?;
                d.newsvendor_params(rows[t].price)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut warnings = Vec::new();
    let degenerate = params.iter().filter(|p| p.is_degenerate()).count();
    if degenerate > 0 {
        warnings.push(format!(
            "{degenerate} months have p <= c; their Bayes act is 0"
        ));
    }
    let outcomes = st.run("downstream", || newsvendor_outcomes(&ensembles, &params))?;
    let split = ensembles.len() - f.test_months;
    st.artifact("ensembles_align", "ensembles_align.csv", |p| {
        write_ensembles(p, &ensembles[..split], EnsembleLayout::Wide)
    })?;
    st.artifact("ensembles_test", "ensembles_test.csv", |p| {
        write_ensembles(p, &ensembles[split..], EnsembleLayout::Wide)
    })?;
    st.artifact("params", "newsvendor_params.csv", |p| {
        write_params(p, &params)
    })?;
    let recs: Vec<ScoreRecord> = outcomes.iter().map(ScoreRecord::from).collect();
    st.artifact("scores_align", "scores_align.csv", |p| {
        write_scores(p, &recs[..split])
    })?;
    st.artifact("scores_test", "scores_test.csv", |p| {
        write_scores(p, &recs[split..])
    })?;

    // Alignment targets are losses so that a larger score means a worse outcome.
    let losses: Vec<f64> = outcomes.iter().map(|o| -o.s_d).collect();
    let upstream_test = ensembles[split..]
        .iter()
        .map(crps_ensemble)
        .collect::<Result<Vec<_>>>()?;
    let mut extra = BTreeMap::new();
    extra.insert("degenerate_months".into(), degenerate as f64);
    extra.insert(
        "mean_profit_test".into(),
        outcomes[split..].iter().map(|o| o.s_d).sum::<f64>() / f.test_months as f64,
    );
    let fit_set = AlignmentDataset::from_parts(
        ensembles[..split].to_vec(),
        losses[..split].to_vec(),
        meta("inventory", "negative profit"),
    )?;
    let test_set = AlignmentDataset::from_parts(
        ensembles[split..].to_vec(),
        losses[split..].to_vec(),
        meta("inventory", "negative profit"),
    )?;
    align_and_evaluate(
        cfg,
        st,
        AlignInputs {
            fit: fit_set,
            test: test_set,
            upstream_test,
            reference: None,
            operator: ScoreOperator::TwCrps,
            extra,
            warnings,
        },
    )
}

/// Target map of the convex toy, `f2(x) = (x⁴ + 2x³ + 2x²)/2`.
pub fn convex_toy_target(x: f64) -> f64 {
    0.5 * (x.powi(4) + 2.0 * x.powi(3) + 2.0 * x * x)
}

/// Analytic chaining function of the convex toy, `sign(x)·sqrt(f2(x)/2)`.
pub fn convex_toy_nu(x: f64) -> f64 {
    x.signum() * (convex_toy_target(x) / 2.0).max(0.0).sqrt()
}

fn convex_toy(cfg: &ExperimentConfig, st: &mut Stages) -> Result<ExperimentOutput> {
    let c = &cfg.convex_toy;
    let seed = st.seed("data");
    let make =
        |n: usize, offset: usize, rng: &mut ChaCha8Rng| -> Result<(Vec<Ensemble<f64>>, Vec<f64>)> {
            let mut ens = Vec::with_capacity(n);
            let mut targets = Vec::with_capacity(n);
            for i in 0..n {
                let s: Vec<f64> = (0..c.ensemble_size)
                    .map(|_| rng.gen_range(c.x_min..c.x_max))
                    .collect();
                targets.push(s.iter().map(|&x| convex_toy_target(x)).sum::<f64>() / s.len() as f64);
                ens.push(Ensemble::new((offset + i).to_string(), s, 0.0)?);
            }
            Ok((ens, targets))
        };
    let (fit, test) = st.run("generate", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((
            make(c.n_points, 0, &mut rng)?,
            make(c.n_test, c.n_points, &mut rng)?,
        ))
    })?;
    st.artifact("ensembles_align", "ensembles_align.csv", |p| {
        write_ensembles(p, &fit.0, EnsembleLayout::Wide)
    })?;
    // Non-aligned baseline: the source map applied to the raw residuals.
    let upstream_test: Vec<f64> = test
        .0
        .iter()
        .map(|e| ScoreOperator::QuadraticResidual.eval(e.samples(), 0.0))
        .collect();

    let mut out = align_and_evaluate(
        cfg,
        st,
        AlignInputs {
            fit: AlignmentDataset::from_parts(fit.0, fit.1, meta("convex_toy", "f2"))?,
            test: AlignmentDataset::from_parts(test.0, test.1, meta("convex_toy", "f2"))?,
            upstream_test,
            reference: None,
            operator: ScoreOperator::QuadraticResidual,
            extra: BTreeMap::new(),
            warnings: Vec::new(),
        },
    )?;
    let net = &out.net;
    let (max_err, rms_err) = chaining_error(
        |z| net.effective_nu(z),
        convex_toy_nu,
        c.x_min,
        c.x_max,
        1000,
    );
    out.metrics.extra.insert("nu_max_error_rel".into(), max_err);
    out.metrics.extra.insert("nu_rms_error_rel".into(), rms_err);
    let mut grid = export_chaining_grid(net, c.x_min, c.x_max, cfg.export.grid_points)?;
    with_reference(&mut grid, convex_toy_nu)?;
    st.artifact("chaining_grid", "chaining_grid.csv", |p| {
        write_grid(p, &grid)
    })?;
    Ok(out)
}
