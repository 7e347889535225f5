use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::optim::{Adam, AdamConfig};
use crate::scalar::mean_std;
use crate::scoring::{kernel_score_grad, Ensemble};
use crate::{Error, Result, Scalar};

/// Lower bound on the predictive standard deviation, in target units.
pub const SIGMA_FLOOR: f64 = 1e-6;

const GRAD_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressorConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Reparameterized samples per instance in the CRPS loss.
    pub train_samples: usize,
    pub seed: u64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            learning_rate: 1e-2,
            weight_decay: 1e-4,
            epochs: 100,
            batch_size: 64,
            train_samples: 32,
            seed: 0,
        }
    }
}

impl RegressorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(
                "regressor hidden widths must be nonempty and positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(
                "regressor learning_rate must be > 0 and weight_decay >= 0".into(),
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.train_samples < 2 {
            return Err(Error::Config(
                "regressor epochs and batch_size must be >= 1, train_samples >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// MLP with rectifier hidden layers and two linear heads, `μ(x)` and `log σ²(x)`.
///
/// Inputs and targets are standardized with training statistics; the stored
/// parameters act on the standardized scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianRegressor<T> {
    sizes: Vec<usize>,
    params: Vec<T>,
    x_shift: T,
    x_scale: T,
    y_shift: T,
    y_scale: T,
}

struct Pass<T> {
    acts: Vec<Vec<T>>,
    mu: T,
    log_var: T,
}

impl<T: Scalar> GaussianRegressor<T> {
    fn init(hidden: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut sizes = vec![1];
        sizes.extend_from_slice(hidden);
        sizes.push(2);
        let mut params = Vec::new();
        for l in 0..sizes.len() - 1 {
            let r = 1.0 / (sizes[l] as f64).sqrt();
            let dist = Uniform::new(-r, r);
            let n = sizes[l] * sizes[l + 1] + sizes[l + 1];
            params.extend((0..n).map(|_| T::of(rng.sample(dist))));
        }
        Self {
            sizes,
            params,
            x_shift: T::zero(),
            x_scale: T::one(),
            y_shift: T::zero(),
            y_scale: T::one(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn forward(&self, params: &[T], x: T) -> Pass<T> {
        let mut acts = vec![vec![(x - self.x_shift) / self.x_scale]];
        let mut off = 0;
        let last = self.sizes.len() - 2;
        for l in 0..=last {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[off..off + n_in * n_out];
            let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let input = acts.last().unwrap();
            let out: Vec<T> = (0..n_out)
                .map(|o| {
                    let z = w[o * n_in..(o + 1) * n_in]
                        .iter()
                        .zip(input)
                        .fold(b[o], |acc, (&wi, &xi)| acc + wi * xi);
                    if l == last {
                        z
                    } else {
                        z.max(T::zero())
                    }
                })
                .collect();
            acts.push(out);
        }
        let head = acts.last().unwrap();
        let (mu, log_var) = (head[0], head[1]);
        Pass { acts, mu, log_var }
    }

    fn backward(&self, params: &[T], pass: &Pass<T>, d_head: [T; 2], grad: &mut [T]) {
        let mut delta = d_head.to_vec();
        let mut off = params.len();
        for l in (0..self.sizes.len() - 1).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            off -= n_in * n_out + n_out;
            let input = &pass.acts[l];
            let mut d_in = vec![T::zero(); n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == T::zero() {
                    continue;
                }
                let row = off + o * n_in;
                for i in 0..n_in {
                    grad[row + i] = grad[row + i] + d * input[i];
                    d_in[i] = d_in[i] + d * params[row + i];
                }
                grad[off + n_in * n_out + o] = grad[off + n_in * n_out + o] + d;
            }
            if l > 0 {
                for (di, &a) in d_in.iter_mut().zip(input) {
                    if a <= T::zero() {
                        *di = T::zero();
                    }
                }
            }
            delta = d_in;
        }
    }

    fn sigma_std(&self, log_var: T) -> (T, bool) {
        let s = (log_var * T::of(0.5)).exp();
        let floor = T::of(SIGMA_FLOOR) / self.y_scale;
        if s > floor {
            (s, false)
        } else {
            (floor, true)
        }
    }

    /// Predictive mean and standard deviation at `x`, in target units.
    pub fn distribution(&self, x: T) -> (T, T) {
        let pass = self.forward(&self.params, x);
        let (s, _) = self.sigma_std(pass.log_var);
        (
            self.y_shift + self.y_scale * pass.mu,
            (self.y_scale * s).max(T::of(SIGMA_FLOOR)),
        )
    }

    /// `m` draws `μ(x) + σ(x)·ε`.
    pub fn predict_ensemble(&self, x: T, m: usize, seed: u64) -> Result<Vec<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample(x, m, &mut rng)
    }

    fn sample(&self, x: T, m: usize, rng: &mut ChaCha8Rng) -> Result<Vec<T>> {
        if m == 0 {
            return Err(Error::invalid("ensemble size must be >= 1"));
        }
        if !x.is_finite() {
            return Err(Error::invalid("non-finite regressor input"));
        }
        let (mu, sigma) = self.distribution(x);
        let out: Vec<T> = (0..m)
            .map(|_| mu + sigma * T::of(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("regressor produced non-finite samples"));
        }
        Ok(out)
    }

    /// One ensemble per `(x, y)` pair, identified by position.
    pub fn predict_ensembles(
        &self,
        data: &[(T, T)],
        m: usize,
        seed: u64,
    ) -> Result<Vec<Ensemble<T>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        data.iter()
            .enumerate()
            .map(|(i, &(x, y))| Ensemble::new(i.to_string(), self.sample(x, m, &mut rng)?, y))
            .collect()
    }

    /// CRPS gradient for one instance on the standardized scale; returns the loss.
    fn accumulate(&self, x: T, y: T, eps: &[T], weight: T, grad: &mut [T]) -> T {
        let pass = self.forward(&self.params, x);
        let (sigma, floored) = self.sigma_std(pass.log_var);
        let yn = (y - self.y_shift) / self.y_scale;
        let draws: Vec<T> = eps.iter().map(|&e| pass.mu + sigma * e).collect();
        let Ok(kg) = kernel_score_grad(&draws, yn) else {
            return T::nan();
        };
        let d_mu: T = kg.d_samples.iter().copied().sum();
        let d_sigma: T = kg.d_samples.iter().zip(eps).map(|(&d, &e)| d * e).sum();
        let d_log_var = if floored {
            T::zero()
        } else {
            d_sigma * sigma * T::of(0.5)
        };
        self.backward(
            &self.params,
            &pass,
            [d_mu * weight, d_log_var * weight],
            grad,
        );
        kg.score
    }
}

impl<T: Scalar + Serialize> GaussianRegressor<T> {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

impl<T: Scalar + for<'de> Deserialize<'de>> GaussianRegressor<T> {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        let expected: usize = model.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if model.sizes.len() < 3
            || model.sizes[0] != 1
            || model.sizes.last() != Some(&2)
            || model.params.len() != expected
            || model.params.iter().any(|p| !p.is_finite())
        {
            return Err(Error::parse(path, "malformed regressor parameters"));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone)]
pub struct RegressorFit<T> {
    pub model: GaussianRegressor<T>,
    /// Mean training CRPS per epoch, in target units.
    pub epoch_loss: Vec<f64>,
}

/// Fits the regressor by minimizing the sample-based CRPS of reparameterized
/// draws with Adam. Deterministic for a fixed seed.
pub fn train_regressor<T: Scalar>(
    data: &[(T, T)],
    cfg: &RegressorConfig,
) -> Result<RegressorFit<T>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("regressor training data is empty"));
    }
    if data.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid(
            "regressor training data contains non-finite values",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = GaussianRegressor::<T>::init(&cfg.hidden, &mut rng);
    let (xm, xs) = mean_std(data.iter().map(|p| p.0));
    let (ym, ys) = mean_std(data.iter().map(|p| p.1));
    model.x_shift = xm;
    model.x_scale = xs;
    model.y_shift = ym;
    model.y_scale = ys;

    let adam = AdamConfig {
        learning_rate: cfg.learning_rate,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    };
    let mut opt = Adam::new(adam, model.params.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let m = cfg.train_samples;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let eps: Vec<T> = (0..batch.len() * m)
                .map(|_| T::of(rng.sample::<f64, _>(StandardNormal)))
                .collect();
            let weight = T::one() / T::of_usize(batch.len());
            let n_params = model.params.len();
            let partials: Vec<(Vec<T>, f64)> = batch
                .par_chunks(GRAD_CHUNK)
                .zip(eps.par_chunks(GRAD_CHUNK * m))
                .map(|(idx, e)| {
                    let mut g = vec![T::zero(); n_params];
                    let mut loss = 0.0;
                    for (k, &i) in idx.iter().enumerate() {
                        let (x, y) = data[i];
                        loss += model
                            .accumulate(x, y, &e[k * m..(k + 1) * m], weight, &mut g)
                            .as_f64();
                    }
                    (g, loss)
                })
                .collect();
            let mut grad = vec![T::zero(); n_params];
            for (g, l) in partials {
                for (a, b) in grad.iter_mut().zip(g) {
                    *a = *a + b;
                }
                total += l;
            }
            if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingFailure {
                    epoch,
                    reason: "non-finite regressor loss".into(),
                });
            }
            opt.step(&mut model.params, &grad);
        }
        epoch_loss.push(total / data.len() as f64 * model.y_scale.as_f64());
    }
    Ok(RegressorFit { model, epoch_loss })
}
