use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scoring::Ensemble;
use crate::{Error, Result};

const ALPHA_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
const BETA_GRID: [f64; 4] = [0.0, 0.05, 0.1, 0.2];
const GAMMA_GRID: [f64; 5] = [0.05, 0.1, 0.2, 0.3, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    pub initial_window: usize,
    pub horizon: usize,
    pub stride: usize,
    pub ensemble_size: usize,
    /// Seasonal period; seasonality is used only when the window holds two full periods.
    pub period: usize,
    /// Clamp predictive samples at zero (demand-like series).
    pub nonnegative: bool,
    pub seed: u64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            initial_window: 24,
            horizon: 1,
            stride: 1,
            ensemble_size: 50,
            period: 12,
            nonnegative: true,
            seed: 0,
        }
    }
}

/// Additive Holt-Winters state after a pass over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct HoltWinters {
    pub alpha: f64,
    pub beta: f64,
    /// `None` when the window is too short for seasonality.
    pub gamma: Option<f64>,
    pub period: usize,
    level: f64,
    trend: f64,
    season: Vec<f64>,
    /// Next seasonal slot, i.e. the window length modulo the period.
    phase: usize,
    /// In-window one-step-ahead errors.
    pub residuals: Vec<f64>,
}

impl HoltWinters {
    fn run(y: &[f64], alpha: f64, beta: f64, gamma: Option<f64>, period: usize) -> Self {
        let (mut level, mut trend, mut season, start) = match gamma {
            Some(_) => {
                let m1 = y[..period].iter().sum::<f64>() / period as f64;
                let m2 = y[period..2 * period].iter().sum::<f64>() / period as f64;
                let season: Vec<f64> = y[..period].iter().map(|v| v - m1).collect();
                // Level sits at the end of the first period.
                let trend = (m2 - m1) / period as f64;
                (
                    m1 + trend * (period as f64 - 1.0) / 2.0,
                    trend,
                    season,
                    period,
                )
            }
            None => (y[0], 0.0, vec![0.0; period.max(1)], 1),
        };
        let p = season.len();
        let mut residuals = Vec::with_capacity(y.len() - start);
        for (t, &obs) in y.iter().enumerate().skip(start) {
            let s = season[t % p];
            let forecast = level + trend + s;
            residuals.push(obs - forecast);
            let prev = level;
            level = alpha * (obs - s) + (1.0 - alpha) * (level + trend);
            trend = beta * (level - prev) + (1.0 - beta) * trend;
            if let Some(g) = gamma {
                season[t % p] = g * (obs - level) + (1.0 - g) * s;
            }
        }
        Self {
            alpha,
            beta,
            gamma,
            period: p,
            level,
            trend,
            season,
            phase: y.len() % p,
            residuals,
        }
    }

    fn sse(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }

    /// Point forecast `h ≥ 1` steps past the end of the window.
    pub fn forecast(&self, h: usize) -> f64 {
        let s = if self.gamma.is_some() {
            self.season[(self.phase + h - 1) % self.period]
        } else {
            0.0
        };
        self.level + h as f64 * self.trend + s
    }
}

/// Fits smoothing constants by one-step squared error over a fixed grid.
/// Ties keep the first grid point, so the fit is deterministic.
pub fn fit_holt_winters(y: &[f64], period: usize) -> Result<HoltWinters> {
    if y.len() < 2 {
        return Err(Error::invalid("Holt-Winters needs at least 2 observations"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contains non-finite values"));
    }
    let seasonal = period >= 2 && y.len() >= 2 * period;
    let gammas: Vec<Option<f64>> = if seasonal {
        GAMMA_GRID.iter().map(|&g| Some(g)).collect()
    } else {
        vec![None]
    };
    let mut best: Option<HoltWinters> = None;
    for &a in &ALPHA_GRID {
        for &b in &BETA_GRID {
            for &g in &gammas {
                let hw = HoltWinters::run(y, a, b, g, if seasonal { period } else { 1 });
                if best.as_ref().is_none_or(|cur| hw.sse() < cur.sse()) {
                    best = Some(hw);
                }
            }
        }
    }
    Ok(best.expect("grid is nonempty"))
}

/// Rolling-origin backtest with an expanding window.
///
/// At each origin `o` the model is fitted on `series[..o]` only and the
/// ensemble for `series[o + horizon − 1]` is the point forecast plus a
/// bootstrap of the in-window one-step residuals. Ensembles are identified by
/// the index of the month they forecast.
pub fn exp_smoothing_backtest(series: &[f64], cfg: &BacktestConfig) -> Result<Vec<Ensemble<f64>>> {
    if cfg.initial_window < 2 || cfg.horizon == 0 || cfg.stride == 0 || cfg.ensemble_size == 0 {
        return Err(Error::invalid(
            "backtest needs initial_window >= 2 and positive horizon, stride, ensemble_size",
        ));
    }
    if series.len() < cfg.initial_window + cfg.horizon {
        return Err(Error::invalid(format!(
            "series of length {} is too short for window {} and horizon {}",
            series.len(),
            cfg.initial_window,
            cfg.horizon
        )));
    }
    let mut out = Vec::new();
    let mut origin = cfg.initial_window;
    while origin + cfg.horizon <= series.len() {
        let hw = fit_holt_winters(&series[..origin], cfg.period)?;
        let point = hw.forecast(cfg.horizon);
        let target = origin + cfg.horizon - 1;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(target as u64);
        let samples: Vec<f64> = (0..cfg.ensemble_size)
            .map(|_| {
                let r = if hw.residuals.is_empty() {
                    0.0
                } else {
                    hw.residuals[rng.gen_range(0..hw.residuals.len())]
                };
                let v = point + r;
                if cfg.nonnegative {
                    v.max(0.0)
                } else {
                    v
                }
            })
            .collect();
        out.push(Ensemble::new(target.to_string(), samples, series[target])?);
        origin += cfg.stride;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seasonal_series(n: usize) -> Vec<f64> {
        (0..n)
            .map(|t| 50.0 + 0.3 * t as f64 + 10.0 * (t as f64 * std::f64::consts::TAU / 12.0).sin())
            .collect()
    }

    #[test]
    fn backtest_counts() {
        let cfg = BacktestConfig::default();
        assert_eq!(
            exp_smoothing_backtest(&seasonal_series(144), &cfg)
                .unwrap()
                .len(),
            120
        );
        assert_eq!(
            exp_smoothing_backtest(&seasonal_series(168), &cfg)
                .unwrap()
                .len(),
            144
        );
        let strided = BacktestConfig {
            stride: 5,
            horizon: 3,
            ..cfg.clone()
        };
        assert_eq!(
            exp_smoothing_backtest(&seasonal_series(40), &strided)
                .unwrap()
                .len(),
            3
        );
        assert!(exp_smoothing_backtest(&seasonal_series(24), &cfg).is_err());
    }

    #[test]
    fn constant_series_is_degenerate() {
        let ens = exp_smoothing_backtest(&[7.0; 40], &BacktestConfig::default()).unwrap();
        assert!(ens.iter().all(|e| e.samples().iter().all(|&s| s == 7.0)));
    }

    #[test]
    fn deterministic_seasonal_pattern_is_tracked() {
        let y = seasonal_series(60);
        let hw = fit_holt_winters(&y[..48], 12).unwrap();
        assert!(hw.gamma.is_some());
        assert!(
            (hw.forecast(1) - y[48]).abs() < 1.0,
            "{} vs {}",
            hw.forecast(1),
            y[48]
        );
        let short = fit_holt_winters(&y[..10], 12).unwrap();
        assert!(short.gamma.is_none());
    }

    #[test]
    fn no_lookahead() {
        let y = seasonal_series(80);
        let cfg = BacktestConfig::default();
        let base = exp_smoothing_backtest(&y, &cfg).unwrap();
        let mut perturbed = y.clone();
        for v in &mut perturbed[60..] {
            *v *= 3.0;
        }
        let other = exp_smoothing_backtest(&perturbed, &cfg).unwrap();
        // Forecasts for months before 60 only see data before their origin.
        for (a, b) in base.iter().zip(&other).take(60 - cfg.initial_window) {
            assert_eq!(a.samples(), b.samples());
            assert_eq!(a.observation(), b.observation());
        }
    }
}
