//! Command-line front end.
//!
//! The global flags can also be set through environment variables:
//! `EVALIGN_CONFIG`, `EVALIGN_SEED`, `EVALIGN_OUT`, `EVALIGN_THREADS`;
//! explicit flags win. Settings not given on the command line come from `--config`,
//! falling back to the built-in defaults of the chosen experiment.

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind};
use super::export::{
    export_alignment_curve, export_chaining_grid, with_reference, write_curve, write_grid,
};
use super::run::run_experiment;
use super::seeds::stage_seed;
use crate::align::{
    delta_tau, infer_alignment, kendall_tau, train_alignment, AlignmentDataset, DatasetMeta,
};
use crate::downstream::io::{read_params, read_scores, write_scores, ScoreRecord};
use crate::downstream::{newsvendor_outcomes, synth_downstream, NewsvendorParams};
use crate::forecast::io::{read_demand, read_xy, write_demand, write_xy};
use crate::forecast::{
    exp_smoothing_backtest, gen_demand_series, gen_synth_data, train_regressor, GaussianRegressor,
    NoiseKind, SynthDataSpec, SynthKind,
};
use crate::monotone::{AlignmentNet, BaseActivation};
use crate::scoring::io::{read_ensembles, write_ensembles, EnsembleLayout};
use crate::scoring::{crps_ensemble, ChainingSpec, Ensemble};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "evalign",
    version,
    about = "Learn downstream-aligned weighted CRPS for ensemble forecasts",
    after_help = "Environment: EVALIGN_CONFIG, EVALIGN_SEED, EVALIGN_OUT, EVALIGN_THREADS stand in for the global flags.\n\
                  Exit codes: 0 ok, 2 usage or configuration, 3 invalid input, 4 training diverged,\n\
                  5 file I/O or parse failure, 6 output directory locked."
)]
struct Cli {
    /// Experiment config (TOML). Supplies defaults for every subcommand.
    #[arg(long, global = true, env = "EVALIGN_CONFIG")]
    config: Option<PathBuf>,

    /// Root seed; overrides the config's seed.
    #[arg(long, global = true, env = "EVALIGN_SEED")]
    seed: Option<u64>,

    /// Output file; for `run`, the output directory.
    #[arg(long, global = true, env = "EVALIGN_OUT")]
    out: Option<PathBuf>,

    /// Worker threads for batch-parallel stages (default: all cores).
    #[arg(long, global = true, env = "EVALIGN_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic regression set (x,y) or a monthly demand series.
    GenData(GenData),
    /// Train the Gaussian CRPS regressor on an (x,y) CSV and save it as JSON.
    TrainForecaster(TrainForecaster),
    /// Produce ensembles from a saved regressor or a Holt-Winters demand backtest.
    Forecast(Forecast),
    /// Score ensembles with the newsvendor program (realized profit of the Bayes act).
    Downstream(Downstream),
    /// Score ensembles with a known chaining function (twCRPS targets).
    SynthDownstream(SynthDownstream),
    /// Fit an alignment network to ensembles and downstream scores.
    AlignTrain(AlignTrain),
    /// Evaluate a saved alignment network: MAE and Kendall tau, aligned and not.
    AlignEval(AlignEval),
    /// Run a full experiment from --config and write a run directory with a manifest.
    Run,
    /// Tabulate a learned chaining function and its weighting function on a grid.
    ExportGrid(ExportGrid),
    /// Write an alignment curve: per-instance score pairs sorted by the evaluation score.
    ExportCurve(ExportCurve),
}

#[derive(Debug, Args)]
struct GenData {
    /// `sinusoidal`, `quadratic` or `demand`.
    #[arg(long, default_value = "sinusoidal")]
    kind: String,
    /// Noise for regression data: `heterogeneous` or `homogeneous`.
    #[arg(long, value_parser = parse_serde::<NoiseKind>)]
    noise: Option<NoiseKind>,
    /// Number of (x,y) points.
    #[arg(long)]
    n_points: Option<usize>,
    /// Number of months for `demand`.
    #[arg(long)]
    months: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainForecaster {
    /// Training data, columns `x,y`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Debug, Args)]
struct Forecast {
    /// Saved regressor; requires --data.
    #[arg(long, conflicts_with = "demand", requires = "data")]
    model: Option<PathBuf>,
    /// Points to forecast, columns `x,y`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Demand CSV (`month_index,demand,price`) to backtest with Holt-Winters.
    #[arg(long, required_unless_present = "model")]
    demand: Option<PathBuf>,
    /// Ensemble members per instance.
    #[arg(long)]
    ensemble_size: Option<usize>,
}

#[derive(Debug, Args)]
struct Downstream {
    /// Ensemble CSV whose observations are realized demand.
    #[arg(long)]
    ensembles: PathBuf,
    /// Per-instance economics, columns `p,c,h`, in ensemble order.
    #[arg(long, conflicts_with_all = ["demand", "price"])]
    params: Option<PathBuf>,
    /// Demand CSV; each instance id is a month index whose price sets p, with
    /// cost and holding from the config's downstream section.
    #[arg(long, conflicts_with = "price")]
    demand: Option<PathBuf>,
    /// Constant price for every instance (with the config's cost rule and holding).
    #[arg(long)]
    price: Option<f64>,
}

#[derive(Debug, Args)]
struct SynthDownstream {
    #[arg(long)]
    ensembles: PathBuf,
    /// Chaining function, e.g. `threshold:0.5`, `interval:-0.5,1.5`,
    /// `gaussian:0.5,0,1`, `sum_sigmoids`, `identity`. Defaults to the config's.
    #[arg(long, value_parser = ChainingSpec::<f64>::parse_compact)]
    chaining: Option<ChainingSpec<f64>>,
}

#[derive(Debug, Args)]
struct ScoreInputs {
    /// Ensemble CSV (long or wide layout).
    #[arg(long)]
    ensembles: PathBuf,
    /// Downstream score CSV, joined to the ensembles by instance id.
    #[arg(long)]
    scores: PathBuf,
    /// Use −s_d as target, for scores where larger is better (profits).
    #[arg(long)]
    negate: bool,
}

#[derive(Debug, Args)]
struct AlignTrain {
    #[command(flatten)]
    inputs: ScoreInputs,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Base activation: `relu` or `gelu`.
    #[arg(long, value_parser = parse_serde::<BaseActivation>)]
    activation: Option<BaseActivation>,
    /// Also write the per-epoch loss trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AlignEval {
    #[command(flatten)]
    inputs: ScoreInputs,
    /// Alignment network checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Also write per-instance predictions here.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportGrid {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    z_min: f64,
    #[arg(long, allow_hyphen_values = true)]
    z_max: f64,
    /// Grid size; defaults to the config's export section.
    #[arg(long)]
    n_points: Option<usize>,
    /// Analytic chaining function to tabulate alongside, in the compact form.
    #[arg(long, value_parser = ChainingSpec::<f64>::parse_compact)]
    reference: Option<ChainingSpec<f64>>,
}

#[derive(Debug, Args)]
struct ExportCurve {
    #[command(flatten)]
    inputs: ScoreInputs,
    /// Use the aligned score of this network instead of CRPS.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return 2;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            e.exit_code()
        }
    }
}

fn error_chain(e: &Error) -> String {
    let mut msg = e.to_string();
    let mut src = std::error::Error::source(e);
    while let Some(s) = src {
        let text = s.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
        src = s.source();
    }
    msg
}

fn parse_serde<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

impl Cli {
    /// Config from --config, else the defaults of `fallback`, with --seed applied.
    fn experiment(&self, fallback: ExperimentKind) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::new(fallback),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn out_file(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Config("--out is required for this subcommand".into()))
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => gen_data(cli, a),
        Command::TrainForecaster(a) => train_forecaster(cli, a),
        Command::Forecast(a) => forecast(cli, a),
        Command::Downstream(a) => downstream(cli, a),
        Command::SynthDownstream(a) => synth(cli, a),
        Command::AlignTrain(a) => align_train(cli, a),
        Command::AlignEval(a) => align_eval(cli, a),
        Command::Run => run(cli),
        Command::ExportGrid(a) => export_grid(cli, a),
        Command::ExportCurve(a) => export_curve(cli, a),
    }
}

fn gen_data(cli: &Cli, a: &GenData) -> Result<()> {
    let out = cli.out_file()?;
    if a.kind == "demand" {
        let cfg = cli.experiment(ExperimentKind::Inventory)?;
        let mut spec = cfg.forecast.demand.clone();
        spec.seed = stage_seed(cfg.seed, "demand");
        if let Some(m) = a.months {
            spec.months = m;
        }
        let rows = gen_demand_series(&spec)?;
        write_demand(out, &rows)?;
        eprintln!("wrote {} months to {}", rows.len(), out.display());
        return Ok(());
    }
    let kind: SynthKind = parse_serde(&a.kind)
        .map_err(|_| Error::Config(format!("unknown data kind `{}`", a.kind)))?;
    let cfg = cli.experiment(ExperimentKind::SyntheticDownstream)?;
    let spec = SynthDataSpec {
        kind,
        noise: a.noise.unwrap_or(cfg.forecast.noise),
        n_points: a.n_points.unwrap_or(cfg.forecast.n_points),
        seed: stage_seed(cfg.seed, "data"),
    };
    let data = gen_synth_data(&spec)?;
    write_xy(out, &data)?;
    eprintln!("wrote {} points to {}", data.len(), out.display());
    Ok(())
}

fn train_forecaster(cli: &Cli, a: &TrainForecaster) -> Result<()> {
    let out = cli.out_file()?;
    let cfg = cli.experiment(ExperimentKind::SyntheticDownstream)?;
    let mut reg = cfg.forecast.regressor.clone();
    reg.seed = stage_seed(cfg.seed, "regressor");
    if let Some(e) = a.epochs {
        reg.epochs = e;
    }
    if let Some(lr) = a.lr {
        reg.learning_rate = lr;
    }
    let data = read_xy(&a.data)?;
    let fit = train_regressor(&data, &reg)?;
    fit.model.save(out)?;
    if let Some(last) = fit.epoch_loss.last() {
        eprintln!("final training CRPS {last:.6}");
    }
    Ok(())
}

fn forecast(cli: &Cli, a: &Forecast) -> Result<()> {
    let out = cli.out_file()?;
    let ensembles = if let Some(model) = &a.model {
        let cfg = cli.experiment(ExperimentKind::SyntheticDownstream)?;
        let reg = GaussianRegressor::<f64>::load(model)?;
        let data = read_xy(a.data.as_deref().expect("clap enforces --data"))?;
        let m = a.ensemble_size.unwrap_or(cfg.forecast.ensemble_size);
        reg.predict_ensembles(&data, m, stage_seed(cfg.seed, "predict"))?
    } else {
        let cfg = cli.experiment(ExperimentKind::Inventory)?;
        let rows = read_demand(a.demand.as_deref().expect("clap enforces --demand"))?;
        let mut bt = cfg.forecast.backtest.clone();
        bt.seed = stage_seed(cfg.seed, "backtest");
        if let Some(m) = a.ensemble_size {
            bt.ensemble_size = m;
        }
        let series: Vec<f64> = rows.iter().map(|r| r.demand).collect();
        exp_smoothing_backtest(&series, &bt)?
    };
    write_ensembles(out, &ensembles, EnsembleLayout::Wide)?;
    eprintln!("wrote {} ensembles to {}", ensembles.len(), out.display());
    Ok(())
}

fn downstream(cli: &Cli, a: &Downstream) -> Result<()> {
    let out = cli.out_file()?;
    let cfg = cli.experiment(ExperimentKind::Inventory)?;
    let ensembles = read_ensembles(&a.ensembles)?;
    let params: Vec<NewsvendorParams<f64>> = if let Some(path) = &a.params {
        read_params(path)?
    } else if let Some(path) = &a.demand {
        let rows = read_demand(path)?;
        let price_of: HashMap<String, f64> = rows
            .iter()
            .map(|r| (r.month_index.to_string(), r.price))
            .collect();
        ensembles
            .iter()
            .map(|e| {
                let price = price_of.get(e.instance_id()).ok_or_else(|| {
                    Error::invalid(format!(
                        "instance `{}` is not a month of {}",
                        e.instance_id(),
                        path.display()
                    ))
                })?;
                cfg.downstream.newsvendor_params(*price)
            })
            .collect::<Result<_>>()?
    } else if let Some(price) = a.price {
        vec![cfg.downstream.newsvendor_params(price)?; ensembles.len()]
    } else {
        return Err(Error::Config(
            "one of --params, --demand or --price is required".into(),
        ));
    };
    let outcomes = newsvendor_outcomes(&ensembles, &params)?;
    let records: Vec<ScoreRecord> = outcomes.iter().map(ScoreRecord::from).collect();
    write_scores(out, &records)
}

fn synth(cli: &Cli, a: &SynthDownstream) -> Result<()> {
    let out = cli.out_file()?;
    let spec = match &a.chaining {
        Some(spec) => spec.clone(),
        None => {
            cli.experiment(ExperimentKind::SyntheticDownstream)?
                .downstream
                .chaining
        }
    };
    let ensembles = read_ensembles(&a.ensembles)?;
    let scores = synth_downstream(&ensembles, &spec)?;
    let records: Vec<ScoreRecord> = ensembles
        .iter()
        .zip(scores)
        .map(|(e, s_d)| ScoreRecord {
            instance_id: e.instance_id().to_string(),
            s_d,
            action: None,
            params: None,
        })
        .collect();
    write_scores(out, &records)
}

/// Ensembles paired with their downstream targets, in ensemble-file order.
fn load_dataset(inputs: &ScoreInputs) -> Result<AlignmentDataset<f64>> {
    let ensembles = read_ensembles(&inputs.ensembles)?;
    let mut by_id: HashMap<String, f64> = HashMap::new();
    for r in read_scores(&inputs.scores)? {
        if by_id.insert(r.instance_id.clone(), r.s_d).is_some() {
            return Err(Error::parse(
                &inputs.scores,
                format!("duplicate instance `{}`", r.instance_id),
            ));
        }
    }
    let sign = if inputs.negate { -1.0 } else { 1.0 };
    let targets = ensembles
        .iter()
        .map(|e| {
            by_id.get(e.instance_id()).map(|s| sign * s).ok_or_else(|| {
                Error::invalid(format!(
                    "no score for instance `{}` in {}",
                    e.instance_id(),
                    inputs.scores.display()
                ))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let meta = DatasetMeta {
        source: inputs.ensembles.display().to_string(),
        units: if inputs.negate {
            "negated score".into()
        } else {
            "score".into()
        },
    };
    AlignmentDataset::from_parts(ensembles, targets, meta)
}

fn align_train(cli: &Cli, a: &AlignTrain) -> Result<()> {
    let out = cli.out_file()?;
    let cfg = cli.experiment(ExperimentKind::SyntheticDownstream)?;
    let mut train = cfg.align.clone();
    train.seed = stage_seed(cfg.seed, "align");
    if let Some(e) = a.epochs {
        train.epochs = e;
    }
    if let Some(lr) = a.lr {
        train.learning_rate = lr;
    }
    if a.batch_size.is_some() {
        train.batch_size = a.batch_size;
    }
    if let Some(act) = a.activation {
        train.net.activation = act;
    }
    let data = load_dataset(&a.inputs)?;
    let outcome = train_alignment(&data, &train)?;
    outcome.net.save_checkpoint(out)?;
    if let Some(path) = &a.trace {
        outcome.trace.write_csv(path)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalSummary {
    n: usize,
    mae: f64,
    tau_aligned: f64,
    tau_nonaligned: f64,
    delta_tau: f64,
}

fn crps_all<'a>(ensembles: impl Iterator<Item = &'a Ensemble<f64>>) -> Result<Vec<f64>> {
    ensembles.map(crps_ensemble).collect()
}

fn align_eval(cli: &Cli, a: &AlignEval) -> Result<()> {
    let data = load_dataset(&a.inputs)?;
    let net = AlignmentNet::<f64>::load_checkpoint(&a.checkpoint)?;
    let (preds, mae) = infer_alignment(&net, &data)?;
    let targets = data.scores();
    let upstream = crps_all(data.ensembles())?;
    let tau_aligned = kendall_tau(&preds, &targets)?;
    let tau_nonaligned = kendall_tau(&upstream, &targets)?;
    let summary = EvalSummary {
        n: data.len(),
        mae,
        tau_aligned,
        tau_nonaligned,
        delta_tau: delta_tau(tau_nonaligned, tau_aligned),
    };
    if let Some(path) = &a.predictions {
        let records: Vec<ScoreRecord> = data
            .ensembles()
            .zip(&preds)
            .map(|(e, &s)| ScoreRecord {
                instance_id: e.instance_id().to_string(),
                s_d: s,
                action: None,
                params: None,
            })
            .collect();
        write_scores(path, &records)?;
    }
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    match &cli.out {
        Some(path) => super::run::write_atomic(path, json.as_bytes()),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("`run` needs --config".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    let manifest = run_experiment(&cfg)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&manifest.metrics).expect("metrics serialize")
    );
    Ok(())
}

fn export_grid(cli: &Cli, a: &ExportGrid) -> Result<()> {
    let out = cli.out_file()?;
    let n = match a.n_points {
        Some(n) => n,
        None => {
            cli.experiment(ExperimentKind::SyntheticDownstream)?
                .export
                .grid_points
        }
    };
    let net = AlignmentNet::<f64>::load_checkpoint(&a.checkpoint)?;
    let mut rows = export_chaining_grid(&net, a.z_min, a.z_max, n)?;
    if let Some(spec) = &a.reference {
        with_reference(&mut rows, |z| spec.eval(z))?;
    }
    write_grid(out, &rows)
}

fn export_curve(cli: &Cli, a: &ExportCurve) -> Result<()> {
    let out = cli.out_file()?;
    let data = load_dataset(&a.inputs)?;
    let s_x = match &a.checkpoint {
        Some(path) => infer_alignment(&AlignmentNet::<f64>::load_checkpoint(path)?, &data)?.0,
        None => crps_all(data.ensembles())?,
    };
    let ids: Vec<String> = data
        .ensembles()
        .map(|e| e.instance_id().to_string())
        .collect();
    let curve = export_alignment_curve(&ids, &s_x, &data.scores())?;
    write_curve(out, &curve)?;
    eprintln!("kendall tau {:.4}", curve.tau);
    Ok(())
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::*;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_and_usage_codes() {
        assert_eq!(main(["evalign", "--help"]), 0);
        assert_eq!(main(["evalign", "run", "--help"]), 0);
        assert_eq!(main(["evalign", "--bogus"]), 2);
        assert_eq!(main(["evalign"]), 2);
    }

    #[test]
    fn missing_config_is_a_usage_error() {
        assert_eq!(
            main(["evalign", "run", "--config", "/nonexistent/cfg.toml"]),
            2
        );
    }
}
