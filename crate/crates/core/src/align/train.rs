use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mae, AlignmentDataset};
use crate::monotone::{AlignmentNet, NetConfig};
use crate::optim::{Adam, AdamConfig};
use crate::scalar::mean_std;
use crate::{Error, Result, Scalar};

/// Instances per gradient work unit; partial gradients are summed in chunk order.
const GRAD_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// `None`, or any value at least the training-split size, trains full batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// Fraction of the alignment set used for fitting; the rest is validation.
    pub split_fraction: f64,
    /// Stop after this many epochs without validation improvement and keep the best parameters.
    pub early_stopping: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    /// Center network inputs and standardize targets with training-split statistics.
    /// Inputs keep their units so the hidden kinks stay sharp relative to the data.
    pub normalize: bool,
    pub net: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.04,
            weight_decay: 1e-5,
            epochs: 100,
            batch_size: Some(32),
            seed: 0,
            split_fraction: 0.8,
            early_stopping: None,
            beta1: 0.9,
            beta2: 0.999,
            normalize: true,
            net: NetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config("split_fraction must lie in (0, 1)".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == Some(0) || self.early_stopping == Some(0) {
            return Err(Error::Config(
                "batch_size and early_stopping must be positive".into(),
            ));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochRecord>,
    /// Loss of every optimizer step on its own batch, in step order.
    pub step_losses: Vec<f64>,
}

impl TrainingTrace {
    /// CSV with columns `epoch,train_loss,val_loss` (empty when there is no validation split).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for r in &self.epochs {
            let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, val));
        }
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub net: AlignmentNet<T>,
    pub trace: TrainingTrace,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

/// Mean squared alignment loss over `idx`, reduced in index order.
fn mean_loss<T: Scalar>(net: &AlignmentNet<T>, data: &AlignmentDataset<T>, idx: &[usize]) -> f64 {
    let rec = data.records();
    let losses: Vec<f64> = idx
        .par_iter()
        .map(|&i| {
            let (e, s) = &rec[i];
            let d = net.align_forward(e) - *s;
            (d * d).as_f64()
        })
        .collect();
    losses.iter().sum::<f64>() / idx.len() as f64
}

fn batch_gradient<T: Scalar>(
    net: &AlignmentNet<T>,
    data: &AlignmentDataset<T>,
    batch: &[usize],
    weight: T,
) -> (Vec<T>, f64) {
    let rec = data.records();
    let n_params = net.param_count();
    let partials: Vec<(Vec<T>, f64)> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = vec![T::zero(); n_params];
            let mut loss = 0.0;
            for &i in chunk {
                let (e, s) = &rec[i];
                let (_, sq) =
                    net.accumulate_gradient(e.samples(), e.observation(), *s, weight, &mut g);
                loss += sq.as_f64();
            }
            (g, loss)
        })
        .collect();
    let mut grad = vec![T::zero(); n_params];
    let mut loss = 0.0;
    for (g, l) in partials {
        for (a, b) in grad.iter_mut().zip(g) {
            *a = *a + b;
        }
        loss += l;
    }
    (grad, loss / batch.len() as f64)
}

/// Fits `ν` and `h` by minimizing the mean squared alignment loss.
///
/// The dataset is shuffled with the configured seed and split into a fitting
/// part and a validation part; the trace records both losses after every
/// epoch. Results are bit-identical for a fixed seed regardless of the rayon
/// thread count.
pub fn train_alignment<T: Scalar>(
    data: &AlignmentDataset<T>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = if n == 1 {
        1
    } else {
        ((n as f64 * cfg.split_fraction).round() as usize).clamp(1, n - 1)
    };
    let train_idx: Vec<usize> = order[..n_train].to_vec();
    let val_idx: Vec<usize> = order[n_train..].to_vec();

    let mut net = AlignmentNet::<T>::new(cfg.net.clone(), cfg.seed.wrapping_add(1))?;
    net.set_ensemble_size(Some(data.ensemble_size()));
    if cfg.normalize {
        let rec = data.records();
        let (in_mean, _) = mean_std(train_idx.iter().flat_map(|&i| {
            let e = &rec[i].0;
            e.samples()
                .iter()
                .copied()
                .chain(std::iter::once(e.observation()))
        }));
        net.set_input_normalization(in_mean, T::one())?;
        let (out_mean, out_std) = mean_std(train_idx.iter().map(|&i| rec[i].1));
        net.set_output_normalization(out_mean, out_std)?;
    }
    let (_, out_scale) = net.output_normalization();

    let batch_size = cfg.batch_size.unwrap_or(n_train).min(n_train);
    let mut params = net.params();
    let mut opt = Adam::new(cfg.adam(), params.len());
    let mut trace = TrainingTrace::default();
    let mut best: Option<(f64, Vec<T>)> = None;
    let mut since_best = 0;

    let mut epoch_order = train_idx.clone();
    for epoch in 1..=cfg.epochs {
        epoch_order.shuffle(&mut rng);
        for batch in epoch_order.chunks(batch_size) {
            let weight = T::one() / (T::of_usize(batch.len()) * out_scale * out_scale);
            let (grad, loss) = batch_gradient(&net, data, batch, weight);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingFailure {
                    epoch,
                    reason: "non-finite loss or gradient".into(),
                });
            }
            trace.step_losses.push(loss);
            opt.step(&mut params, &grad);
            net.set_params(&params)?;
        }
        let train_loss = mean_loss(&net, data, &train_idx);
        let val_loss = (!val_idx.is_empty()).then(|| mean_loss(&net, data, &val_idx));
        if !train_loss.is_finite()
            || val_loss.is_some_and(|v| !v.is_finite())
            || !net.params_finite()
        {
            return Err(Error::TrainingFailure {
                epoch,
                reason: "non-finite loss".into(),
            });
        }
        trace.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if let (Some(patience), Some(v)) = (cfg.early_stopping, val_loss) {
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, params.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    break;
                }
            }
        }
    }
    if let Some((_, p)) = best {
        net.set_params(&p)?;
    }
    Ok(TrainOutcome {
        net,
        trace,
        train_indices: train_idx,
        val_indices: val_idx,
    })
}

/// Aligned scores for every record and their MAE against the downstream scores.
pub fn infer_alignment<T: Scalar>(
    net: &AlignmentNet<T>,
    data: &AlignmentDataset<T>,
) -> Result<(Vec<T>, T)> {
    if let Some(m) = net.ensemble_size() {
        if m != data.ensemble_size() {
            return Err(Error::invalid(format!(
                "network was trained on ensembles of size {m}, dataset has {}",
                data.ensemble_size()
            )));
        }
    }
    let preds: Vec<T> = data
        .records()
        .par_iter()
        .map(|(e, _)| net.align_forward(e))
        .collect();
    let err = mae(&preds, &data.scores())?;
    Ok((preds, err))
}
