//! Full training of one architecture and macro-F1 evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetSplits, WindowedDataset};
use crate::error::{Result, ZcpError};
use crate::nn::{adam_step, cross_entropy_loss, AdamState, Model, TensorValue};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Multiplicative learning-rate decay applied every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 1e-4,
            batch_size: 256,
            lr_decay: 0.8,
            decay_every: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size == 0 || self.decay_every == 0 {
            return Err(ZcpError::Config("train: lr, batch_size and decay_every must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(ZcpError::Config(format!("train: lr_decay {} outside (0, 1]", self.lr_decay)));
        }
        Ok(())
    }

    /// Learning rate in effect during (0-based) epoch `epoch`.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }
}

/// Outcome of training one architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec_hash: String,
    pub seed: u64,
    #[serde(with = "crate::float_serde::map")]
    pub proxy_scores: BTreeMap<String, f64>,
    #[serde(with = "crate::float_serde")]
    pub best_val_f1: f64,
    #[serde(with = "crate::float_serde")]
    pub test_f1_at_best_val: f64,
    pub best_epoch: usize,
    pub epochs_completed: usize,
    pub val_f1_history: Vec<f64>,
    pub diverged: bool,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub record: RunRecord,
    /// Parameters of the best-validation epoch.
    pub checkpoint: Vec<TensorValue>,
    /// Mean training loss per completed epoch.
    pub train_loss_history: Vec<f64>,
}

/// Unweighted mean of per-class F1 over classes present in `labels`.
pub fn macro_f1(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(ZcpError::Empty("macro F1 over no samples".into()));
    }
    if predictions.len() != labels.len() {
        return Err(ZcpError::InvalidArgument(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let classes: BTreeSet<usize> = labels.iter().copied().collect();
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
            for (&p, &y) in predictions.iter().zip(labels) {
                match (p == c, y == c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fneg += 1,
                    _ => {}
                }
            }
            let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let recall = tp as f64 / (tp + fneg) as f64;
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        })
        .sum();
    Ok(total / classes.len() as f64)
}

/// Macro F1 of `model` on a whole split, with dropout disabled.
pub fn evaluate_f1(model: &Model, ds: &WindowedDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(ZcpError::Empty(format!("{} split", ds.split.as_str())));
    }
    let preds = model.predict(&ds.windows, 256)?;
    macro_f1(&preds, &ds.labels)
}

/// Trains with Adam on shuffled minibatches, evaluating validation macro
/// F1 after every epoch. The model ends holding the best-validation
/// parameters, and test F1 is measured with them. A non-finite loss stops
/// the run and marks it diverged.
pub fn train(model: &mut Model, spec_hash: &str, data: &DatasetSplits, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(ZcpError::Empty("training split".into()));
    }
    let start = Instant::now();
    model.seed_dropout(config.seed);
    model.set_deterministic(true);
    let initial_val = evaluate_f1(model, &data.val)?;
    let mut best_val = initial_val;
    let mut best_epoch = 0;
    let mut checkpoint = model.params().snapshot();
    let mut history = Vec::with_capacity(config.epochs);
    let mut losses = Vec::with_capacity(config.epochs);
    let mut adam = AdamState::new(model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut diverged = false;

    for epoch in 0..config.epochs {
        let lr = config.lr_at_epoch(epoch);
        order.shuffle(&mut rng);
        model.set_deterministic(false);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let (x, y) = data.train.batch(chunk);
            let logits = model.forward(&x)?;
            let (loss, grad) = cross_entropy_loss(&logits, &y)?;
            if !loss.is_finite() {
                diverged = true;
                break;
            }
            model.backward(&grad, false)?;
            adam_step(model.params_mut(), &mut adam, lr);
            loss_sum += loss * chunk.len() as f64;
        }
        model.set_deterministic(true);
        if diverged {
            warn!("{spec_hash}: non-finite loss in epoch {epoch}; run marked diverged");
            break;
        }
        losses.push(loss_sum / data.train.len() as f64);
        let val = evaluate_f1(model, &data.val)?;
        debug!("{spec_hash}: epoch {epoch} lr {lr:.3e} loss {:.4} val_f1 {val:.4}", losses[epoch]);
        if history.is_empty() || val > best_val {
            best_val = val;
            best_epoch = epoch + 1;
            checkpoint = model.params().snapshot();
        }
        history.push(val);
    }

    model.params_mut().restore(&checkpoint)?;
    let test = evaluate_f1(model, &data.test)?;
    let record = RunRecord {
        spec_hash: spec_hash.to_owned(),
        seed: config.seed,
        proxy_scores: BTreeMap::new(),
        best_val_f1: best_val,
        test_f1_at_best_val: test,
        best_epoch,
        epochs_completed: history.len(),
        val_f1_history: history,
        diverged,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        record,
        checkpoint,
        train_loss_history: losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        assert_eq!(macro_f1(&[0, 1, 2, 2], &[0, 1, 2, 2]).unwrap(), 1.0);
    }

    #[test]
    fn constant_prediction_on_balanced_pair() {
        let f = macro_f1(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap();
        assert!((f - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn classes_absent_from_truth_are_skipped() {
        // Class 2 is predicted but never true: only classes 0 and 1 count.
        let f = macro_f1(&[0, 2], &[0, 1]).unwrap();
        assert_eq!(f, 0.5);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert!(macro_f1(&[], &[]).is_err());
        assert!(macro_f1(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn decay_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at_epoch(0), 1e-4);
        assert_eq!(cfg.lr_at_epoch(9), 1e-4);
        assert!((cfg.lr_at_epoch(25) - 6.4e-5).abs() < 1e-18);
        assert!((cfg.lr_at_epoch(49) - 1e-4 * 0.8f64.powi(4)).abs() < 1e-18);
    }

    #[test]
    fn invalid_decay_rejected() {
        let cfg = TrainConfig {
            lr_decay: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
