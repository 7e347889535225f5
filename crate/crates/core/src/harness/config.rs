use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::align::TrainConfig;
use crate::downstream::NewsvendorParams;
use crate::forecast::{BacktestConfig, DemandSpec, NoiseKind, RegressorConfig, SynthKind};
use crate::scoring::ChainingSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ConvexToy,
    SyntheticDownstream,
    Inventory,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::ConvexToy => "convex_toy",
            ExperimentKind::SyntheticDownstream => "synthetic_downstream",
            ExperimentKind::Inventory => "inventory",
        }
    }
}

/// Upstream settings: synthetic regression data and the demand backtest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastSection {
    pub kind: SynthKind,
    pub noise: NoiseKind,
    pub n_points: usize,
    /// Share of points used to fit the regressor.
    pub train_fraction: f64,
    /// Share of points forming the alignment set; the remainder is the test set.
    pub val_fraction: f64,
    pub ensemble_size: usize,
    pub regressor: RegressorConfig,
    pub demand: DemandSpec,
    /// Monthly `month_index,demand,price` series used instead of the generator.
    pub demand_csv: Option<PathBuf>,
    pub backtest: BacktestConfig,
    /// Trailing backtest months held out as the alignment test set.
    pub test_months: usize,
}

impl Default for ForecastSection {
    fn default() -> Self {
        Self {
            kind: SynthKind::Sinusoidal,
            noise: NoiseKind::Heterogeneous,
            n_points: 2000,
            train_fraction: 0.8,
            val_fraction: 0.1,
            ensemble_size: 50,
            regressor: RegressorConfig::default(),
            demand: DemandSpec::default(),
            demand_csv: None,
            backtest: BacktestConfig::default(),
            test_months: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CostRule {
    /// `c = p / cost_ratio`.
    #[default]
    PriceOverRatio,
    /// `c = p · cost_ratio`; with a ratio above 1 every purchase loses money.
    PriceTimesRatio,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DownstreamSection {
    /// Chaining function generating synthetic downstream scores.
    pub chaining: ChainingSpec<f64>,
    pub cost_ratio: f64,
    pub cost_rule: CostRule,
    /// Holding cost per unsold unit.
    pub holding: f64,
}

impl Default for DownstreamSection {
    fn default() -> Self {
        Self {
            chaining: ChainingSpec::threshold(0.5),
            cost_ratio: 2.5,
            cost_rule: CostRule::PriceOverRatio,
            holding: 1.0,
        }
    }
}

impl DownstreamSection {
    /// Newsvendor economics for a period with sale price `price`.
    pub fn newsvendor_params(&self, price: f64) -> Result<NewsvendorParams<f64>> {
        let cost = match self.cost_rule {
            CostRule::PriceOverRatio => price / self.cost_ratio,
            CostRule::PriceTimesRatio => price * self.cost_ratio,
        };
        NewsvendorParams::new(price, cost, self.holding)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvexToySection {
    pub n_points: usize,
    pub n_test: usize,
    pub ensemble_size: usize,
    pub x_min: f64,
    pub x_max: f64,
}

impl Default for ConvexToySection {
    fn default() -> Self {
        Self {
            n_points: 2000,
            n_test: 500,
            ensemble_size: 1,
            x_min: -3.0,
            x_max: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExportSection {
    pub grid_points: usize,
}

impl Default for ExportSection {
    fn default() -> Self {
        Self { grid_points: 201 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub forecast: ForecastSection,
    #[serde(default)]
    pub downstream: DownstreamSection,
    #[serde(default)]
    pub align: TrainConfig,
    #[serde(default)]
    pub convex_toy: ConvexToySection,
    #[serde(default)]
    pub export: ExportSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    /// Defaults for `kind`; the inventory experiment trains for 1000 epochs.
    pub fn new(kind: ExperimentKind) -> Self {
        let mut align = TrainConfig::default();
        if kind == ExperimentKind::Inventory {
            align.epochs = 1000;
        }
        Self {
            experiment: kind,
            seed: 0,
            output_dir: default_output_dir(),
            forecast: ForecastSection::default(),
            downstream: DownstreamSection::default(),
            align,
            convex_toy: ConvexToySection::default(),
            export: ExportSection::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative `demand_csv` paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::Config(format!(
                "config file not found: {}",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), inner(e))))?;
        if let (Some(csv), Some(dir)) = (&cfg.forecast.demand_csv, path.parent()) {
            if csv.is_relative() {
                cfg.forecast.demand_csv = Some(dir.join(csv));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.align.validate()?;
        let f = &self.forecast;
        match self.experiment {
            ExperimentKind::SyntheticDownstream => {
                f.regressor.validate()?;
                let test = 1.0 - f.train_fraction - f.val_fraction;
                if !(f.train_fraction > 0.0 && f.val_fraction > 0.0 && test > 0.0) {
                    return Err(Error::Config(
                        "forecast.train_fraction and val_fraction must be positive and sum below 1"
                            .into(),
                    ));
                }
                if f.n_points < 10 || f.ensemble_size == 0 {
                    return Err(Error::Config(
                        "forecast.n_points must be >= 10 and ensemble_size >= 1".into(),
                    ));
                }
                self.downstream
                    .chaining
                    .check_params()
                    .map_err(|e| Error::Config(format!("downstream.chaining: {}", inner(e))))?;
            }
            ExperimentKind::Inventory => {
                if let Some(csv) = &f.demand_csv {
                    if !csv.is_file() {
                        return Err(Error::Config(format!(
                            "demand file not found: {}",
                            csv.display()
                        )));
                    }
                }
                if f.test_months == 0 {
                    return Err(Error::Config("forecast.test_months must be >= 1".into()));
                }
                let d = &self.downstream;
                if !(d.cost_ratio > 0.0) || !(d.holding >= 0.0) || !d.holding.is_finite() {
                    return Err(Error::Config(
                        "downstream.cost_ratio must be > 0 and holding >= 0".into(),
                    ));
                }
            }
            ExperimentKind::ConvexToy => {
                let c = &self.convex_toy;
                if c.n_points < 2 || c.n_test == 0 || c.ensemble_size == 0 || !(c.x_min < c.x_max) {
                    return Err(Error::Config(
                        "convex_toy needs n_points >= 2, n_test >= 1, ensemble_size >= 1, x_min < x_max".into(),
                    ));
                }
            }
        }
        if self.export.grid_points < 3 {
            return Err(Error::Config("export.grid_points must be >= 3".into()));
        }
        Ok(())
    }
}

fn inner(e: Error) -> String {
    match e {
        Error::Config(m) | Error::InvalidInput(m) => m,
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip_is_lossless() {
        for kind in [
            ExperimentKind::ConvexToy,
            ExperimentKind::SyntheticDownstream,
            ExperimentKind::Inventory,
        ] {
            let mut cfg = ExperimentConfig::new(kind);
            cfg.downstream.chaining = ChainingSpec::default_sum_sigmoids();
            cfg.seed = 17;
            let text = cfg.to_toml_string().unwrap();
            let back = ExperimentConfig::from_toml_str(&text).unwrap();
            assert_eq!(back.to_toml_string().unwrap(), text);
        }
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "experiment = \"synthetic_downstream\"\n[downstream.chaining]\nfamily = \"interval\"\na = -0.5\nb = 1.5\n",
        )
        .unwrap();
        assert_eq!(cfg.forecast.n_points, 2000);
        assert_eq!(cfg.align.learning_rate, 0.04);
        assert!(matches!(
            cfg.downstream.chaining,
            ChainingSpec::Interval { .. }
        ));
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            "experiment = \"nope\"",
            "experiment = \"synthetic_downstream\"\n[downstream.chaining]\nfamily = \"interval\"\na = 1\nb = 0\n",
            "experiment = \"synthetic_downstream\"\n[forecast]\ntrain_fraction = 0.95\n",
            "experiment = \"convex_toy\"\n[align]\nlearning_rate = -1\n",
            "experiment = \"inventory\"\n[forecast]\ndemand_csv = \"/no/such/file.csv\"\n",
        ];
        for text in bad {
            assert!(
                matches!(ExperimentConfig::from_toml_str(text), Err(Error::Config(_))),
                "{text}"
            );
        }
        assert!(matches!(
            ExperimentConfig::load(Path::new("/no/such/config.toml")),
            Err(Error::Config(m)) if m.contains("/no/such/config.toml")
        ));
    }
}
