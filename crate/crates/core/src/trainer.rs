//! Plain SGD training, per-epoch logging and inference.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::Model;
use crate::autodiff::{Mode, ParamStore, Tape};
use crate::data::{ClassOrder, DatasetSplit, Sample};
use crate::error::{Error, Result};
use crate::ops::norm::BatchStats;
use crate::ops::{cross_entropy, CE_EPSILON};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, batch_size: 7, epochs: 50, seed: 0, shuffle_each_epoch: true }
    }
}

impl TrainConfig {
    /// `e^-3 ≈ 0.0498`, the alternative reading of the reference learning rate.
    pub fn euler_learning_rate() -> f64 {
        (-3.0f64).exp()
    }

    /// A zero learning rate is accepted as a frozen-weights diagnostic run.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Wall-clock seconds since the start of training.
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub path: String,
    pub true_index: usize,
    pub predicted_index: usize,
    /// Probability of the positive (covid19) class.
    pub score: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub rows: Vec<Prediction>,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub logs: Vec<EpochLog>,
    pub train_seconds: f64,
}

/// Largest number of images pushed through the network at once outside training steps.
pub const EVAL_CHUNK: usize = 32;

/// `θ ← θ − lr·g` for every parameter, then clears the gradients.
pub fn sgd_step(params: &mut ParamStore<f32>, learning_rate: f64) -> Result<()> {
    if !learning_rate.is_finite() {
        return Err(Error::InvalidArgument(format!("learning rate {learning_rate} is not finite")));
    }
    for p in params.iter() {
        if p.grad.shape() != p.value.shape() {
            return Err(Error::Graph(format!("parameter {} has no matching gradient", p.name)));
        }
    }
    let lr = learning_rate as f32;
    for p in params.iter_mut() {
        for (v, &g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
            *v -= lr * g;
        }
        p.grad.fill(0.0);
    }
    Ok(())
}

/// Argmax over a probability row; ties go to the lower index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = i;
        }
    }
    best
}

/// Batch `[B, 3, S, S]` and one-hot targets `[B, 2]` for the selected samples.
pub fn collate(samples: &[Sample], idx: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let images: Vec<&Tensor<f32>> = idx.iter().map(|&i| &samples[i].image).collect();
    let targets: Vec<&Tensor<f32>> = idx.iter().map(|&i| &samples[i].target).collect();
    Ok((Tensor::stack(&images)?, Tensor::stack(&targets)?))
}

/// Sizes of consecutive batches covering `n` samples.
pub fn batch_sizes(n: usize, batch: usize) -> Vec<usize> {
    (0..n).step_by(batch.max(1)).map(|start| batch.min(n - start)).collect()
}

fn correct(probs: &Tensor<f32>, targets: &Tensor<f32>) -> usize {
    let k = targets.shape()[1];
    probs
        .data()
        .chunks(k)
        .zip(targets.data().chunks(k))
        .filter(|(p, t)| argmax(p) == argmax(t))
        .count()
}

/// Mean loss and accuracy of inference-mode predictions over `samples`.
fn evaluate(model: &Model<f32>, samples: &[Sample]) -> Result<(f64, f64)> {
    let (mut loss, mut hits) = (0.0, 0);
    let all: Vec<usize> = (0..samples.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let (x, t) = collate(samples, chunk)?;
        let probs = model.predict_proba(&x)?;
        loss += cross_entropy(&probs, &t)? as f64 * chunk.len() as f64;
        hits += correct(&probs, &t);
    }
    let n = samples.len() as f64;
    Ok((loss / n, hits as f64 / n))
}

/// Replaces every batch-norm running estimate with the statistics of the
/// whole training set, as seen by the current weights.
pub fn recalibrate(model: &mut Model<f32>, samples: &[Sample]) -> Result<()> {
    let all: Vec<usize> = (0..samples.len()).collect();
    // weighted sums of mean and E[x^2] per state
    let mut acc: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; model.running.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for chunk in all.chunks(EVAL_CHUNK) {
        let (x, _) = collate(samples, chunk)?;
        let mut tape = Tape::new();
        let xi = tape.input(x);
        let pass = model.forward(&mut tape, xi, Mode::Train, &mut rng)?;
        let w = chunk.len() as f64;
        for (a, s) in acc.iter_mut().zip(&pass.batch_stats) {
            if let Some(BatchStats { mean, var }) = s {
                let (m, sq) = a.get_or_insert_with(|| (vec![0.0; mean.len()], vec![0.0; mean.len()]));
                for c in 0..mean.len() {
                    let (mu, v) = (mean[c] as f64, var[c] as f64);
                    m[c] += w * mu;
                    sq[c] += w * (v + mu * mu);
                }
            }
        }
    }
    let n = samples.len() as f64;
    for (rs, a) in model.running.iter_mut().zip(acc) {
        if let Some((m, sq)) = a {
            for c in 0..m.len() {
                let mu = m[c] / n;
                rs.mean[c] = mu as f32;
                rs.var[c] = (sq[c] / n - mu * mu).max(0.0) as f32;
            }
        }
    }
    Ok(())
}

/// Trains `model` in place on `split.train`, logging validation metrics after every epoch.
pub fn fit(model: &mut Model<f32>, split: &DatasetSplit, config: &TrainConfig) -> Result<FitResult> {
    fit_with(model, split, config, |_| {})
}

/// [`fit`] with a callback invoked after each epoch.
pub fn fit_with(
    model: &mut Model<f32>,
    split: &DatasetSplit,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<FitResult> {
    config.validate()?;
    let train = &split.train;
    if train.is_empty() {
        return Err(Error::InvalidArgument("training partition is empty".into()));
    }
    if split.validation.is_empty() {
        return Err(Error::InvalidArgument("validation partition is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut logs = Vec::with_capacity(config.epochs);
    let start = Instant::now();
    for epoch in 1..=config.epochs {
        if config.shuffle_each_epoch {
            order.shuffle(&mut rng);
        }
        let (mut loss_sum, mut hits) = (0.0, 0);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let diverged = |loss: f64| Error::Diverged { epoch, batch: b + 1, loss };
            let (x, t) = collate(train, batch)?;
            let mut tape = Tape::new();
            let xi = tape.input(x);
            let pass = match model.forward(&mut tape, xi, Mode::Train, &mut rng) {
                Err(Error::NonFinite { .. }) => return Err(diverged(f64::NAN)),
                other => other?,
            };
            let loss_id = tape.cross_entropy(pass.output, &t)?;
            let loss = tape.value(loss_id).data()[0] as f64;
            if !loss.is_finite() {
                return Err(diverged(loss));
            }
            loss_sum += loss * batch.len() as f64;
            hits += correct(tape.value(pass.output), &t);
            model.params.zero_grads();
            tape.backward(loss_id, &mut model.params)?;
            sgd_step(&mut model.params, config.learning_rate)?;
        }
        recalibrate(model, train)?;
        let (val_loss, val_accuracy) = evaluate(model, &split.validation)?;
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: hits as f64 / train.len() as f64,
            val_loss,
            val_accuracy,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&log);
        logs.push(log);
    }
    Ok(FitResult { logs, train_seconds: start.elapsed().as_secs_f64() })
}

/// Inference-mode predictions and the wall-clock seconds they took.
pub fn predict(model: &Model<f32>, samples: &[Sample]) -> Result<(PredictionSet, f64)> {
    let start = Instant::now();
    let order = ClassOrder::default();
    let mut rows = Vec::with_capacity(samples.len());
    let all: Vec<usize> = (0..samples.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let (x, _) = collate(samples, chunk)?;
        let probs = model.predict_proba(&x)?;
        let k = probs.shape()[1];
        for (&i, row) in chunk.iter().zip(probs.data().chunks(k)) {
            rows.push(Prediction {
                path: samples[i].path.clone(),
                true_index: order.index(samples[i].label),
                predicted_index: argmax(row),
                score: row[ClassOrder::POSITIVE] as f64,
            });
        }
    }
    Ok((PredictionSet { rows }, start.elapsed().as_secs_f64()))
}

/// Upper bound on a single cross-entropy term, `−ln(1e-12)`.
pub fn max_loss() -> f64 {
    -CE_EPSILON.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(w: f32, g: f32) -> ParamStore<f32> {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(w)).unwrap();
        s.get_mut(id).grad = Tensor::scalar(g);
        s
    }

    #[test]
    fn sgd_update_rule() {
        let mut s = store(1.0, 0.5);
        sgd_step(&mut s, 0.1).unwrap();
        assert!((s.iter().next().unwrap().value.data()[0] - 0.95).abs() < 1e-7);
        assert_eq!(s.iter().next().unwrap().grad.data()[0], 0.0);

        let mut s = store(1.0, 0.5);
        sgd_step(&mut s, 0.0).unwrap();
        assert_eq!(s.iter().next().unwrap().value.data()[0], 1.0);
    }

    #[test]
    fn sgd_rejects_mismatched_gradient() {
        let mut s = store(1.0, 0.5);
        s.iter_mut().next().unwrap().grad = Tensor::zeros(vec![2]).unwrap();
        assert!(sgd_step(&mut s, 0.1).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.8]), 1);
    }

    #[test]
    fn batch_schedule() {
        assert_eq!(batch_sizes(20, 7), vec![7, 7, 6]);
        assert_eq!(batch_sizes(40, 7), vec![7, 7, 7, 7, 7, 5]);
        assert_eq!(batch_sizes(3, 7), vec![3]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..Default::default() }.validate().is_err());
        assert!((TrainConfig::euler_learning_rate() - 0.049787).abs() < 1e-6);
    }
}
