use std::path::Path;

use cpf_autodiff::{clip_global_norm, Adam, AdamConfig, Gradients, ParamStore};
use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::sum_bce;
use super::metrics::{bce, metrics, MetricsReport};
use crate::data::StudentSequence;
use crate::model::{Dropout, Model};
use crate::{CoreError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Epoch cap.
    pub epochs: usize,
    /// Epochs without validation AUC improvement before stopping; 0 never stops early.
    pub patience: usize,
    pub l2_lambda: f64,
    pub clip_norm: f64,
    /// Parallel gradient workers per batch; results depend on this count.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 3e-3,
            batch_size: 128,
            epochs: 100,
            patience: 10,
            l2_lambda: 1e-5,
            clip_norm: 5.0,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || self.batch_size == 0 || self.workers == 0 {
            return Err(CoreError::Config("lr must be ≥ 0, batch_size and workers ≥ 1".into()));
        }
        if self.l2_lambda < 0.0 || self.clip_norm <= 0.0 {
            return Err(CoreError::Config("l2_lambda must be ≥ 0 and clip_norm > 0".into()));
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean BCE over the epoch's training predictions, with dropout.
    pub train_bce: f64,
    /// `λ‖θ‖²` at the end of the epoch.
    pub l2_term: f64,
    pub train_predictions: usize,
    pub val_auc: Option<f64>,
    pub val_acc: Option<f64>,
    pub val_rmse: Option<f64>,
    pub val_r2: Option<f64>,
}

pub struct TrainOutcome {
    /// Model at the epoch with the best validation AUC.
    pub model: Model,
    pub adam: Adam,
    pub best_epoch: usize,
    pub best_val: Option<MetricsReport>,
    pub log: Vec<EpochLog>,
}

/// `(probability, label)` pairs of every prediction, in sequence order.
pub fn predictions(model: &Model, sequences: &[&StudentSequence]) -> Result<Vec<(f64, bool)>> {
    let per_seq = sequences
        .par_iter()
        .map(|s| model.predict(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_seq
        .into_iter()
        .flatten()
        .map(|(_, y, label)| (y, label))
        .collect())
}

/// Pooled metrics over all predictions, without dropout.
pub fn evaluate(model: &Model, sequences: &[&StudentSequence]) -> Result<MetricsReport> {
    Ok(metrics(&predictions(model, sequences)?))
}

/// Mean BCE over all predictions, without dropout.
pub fn mean_bce(model: &Model, sequences: &[&StudentSequence]) -> Result<f64> {
    let pairs = predictions(model, sequences)?;
    Ok(pairs.iter().map(|&(y, l)| bce(y, l)).sum::<f64>() / pairs.len().max(1) as f64)
}

/// Sum of per-sequence gradients and BCE over one chunk of a batch.
fn chunk_gradients(
    model: &Model,
    chunk: &[(&StudentSequence, u64)],
    dropout: f64,
    seed_scale: f64,
) -> Result<(Gradients, f64)> {
    let mut grads = Gradients::zeros_like(&model.params);
    let mut loss = 0.0;
    for &(seq, seed) in chunk {
        let mut tape = model.tape();
        let mut drop = if dropout > 0.0 {
            Dropout::new(dropout, ChaCha8Rng::seed_from_u64(seed))
        } else {
            Dropout::off()
        };
        let out = model.forward(&mut tape, seq.valid_steps(), &mut drop, false)?;
        if let Some(sum) = sum_bce(&mut tape, &out.predictions)? {
            loss += tape.scalar_value(sum);
            tape.backward(sum, seed_scale, &mut grads)?;
        }
    }
    Ok((grads, loss))
}

/// Mini-batch Adam with early selection on validation AUC.
///
/// The loss is the mean BCE per prediction in the batch; `l2_lambda · ‖θ‖²`
/// enters through the optimizer as `2λθ`.
pub fn train(
    mut model: Model,
    train_set: &[&StudentSequence],
    val_set: &[&StudentSequence],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let usable: Vec<&StudentSequence> = train_set
        .iter()
        .copied()
        .filter(|s| s.num_predictions() > 0)
        .collect();
    if usable.is_empty() {
        return Err(CoreError::Data("no training window has two valid steps".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(&model.params, AdamConfig::default());
    let dropout = model.config.dropout;
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, ParamStore, Adam, MetricsReport)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..usable.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_count = 0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let items: Vec<(&StudentSequence, u64)> = batch.iter().map(|&i| (usable[i], rng.next_u64())).collect();
            let count: usize = items.iter().map(|(s, _)| s.num_predictions()).sum();
            let scale = 1.0 / count as f64;
            let per_chunk = items.len().div_ceil(cfg.workers);
            let results = if cfg.workers == 1 {
                vec![chunk_gradients(&model, &items, dropout, scale)?]
            } else {
                items
                    .par_chunks(per_chunk)
                    .map(|c| chunk_gradients(&model, c, dropout, scale))
                    .collect::<Result<Vec<_>>>()?
            };
            let mut iter = results.into_iter();
            let (mut grads, mut loss) = iter.next().expect("non-empty batch");
            for (g, l) in iter {
                grads.add_assign(&g);
                loss += l;
            }
            if !loss.is_finite() {
                return Err(CoreError::NonFiniteLoss { epoch, batch: batch_idx });
            }
            let norm = clip_global_norm(&mut grads, cfg.clip_norm);
            debug!("epoch {epoch} batch {batch_idx}: loss {:.5} grad norm {norm:.4}", loss / count as f64);
            adam.step(&mut model.params, &grads, cfg.lr, cfg.l2_lambda)
                .map_err(|e| match e {
                    cpf_autodiff::AutodiffError::NonFiniteGradient { .. } => {
                        CoreError::NonFiniteLoss { epoch, batch: batch_idx }
                    }
                    other => other.into(),
                })?;
            epoch_loss += loss;
            epoch_count += count;
        }

        let val = if val_set.is_empty() { None } else { Some(evaluate(&model, val_set)?) };
        let entry = EpochLog {
            epoch,
            train_bce: epoch_loss / epoch_count as f64,
            l2_term: cfg.l2_lambda * model.params.sum_squares(),
            train_predictions: epoch_count,
            val_auc: val.as_ref().and_then(|v| v.auc),
            val_acc: val.as_ref().map(|v| v.acc),
            val_rmse: val.as_ref().map(|v| v.rmse),
            val_r2: val.as_ref().and_then(|v| v.r2),
        };
        info!(
            "epoch {epoch}: train bce {:.5}, val auc {}",
            entry.train_bce,
            entry.val_auc.map_or("n/a".to_string(), |a| format!("{a:.5}"))
        );
        log.push(entry);

        // Without a validation AUC every epoch counts as an improvement, so the
        // last epoch is kept.
        let score = val.as_ref().and_then(|v| v.auc).unwrap_or(f64::INFINITY);
        let improved = best.as_ref().is_none_or(|b| score > b.0 || score == f64::INFINITY);
        if improved {
            best = Some((score, epoch, model.params.clone(), adam.clone(), val.unwrap_or_default()));
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                info!("early stop after epoch {epoch}");
                break;
            }
        }
    }

    let best_val_present = !val_set.is_empty();
    match best {
        Some((_, best_epoch, params, best_adam, val)) => {
            model.params = params;
            Ok(TrainOutcome {
                model,
                adam: best_adam,
                best_epoch,
                best_val: best_val_present.then_some(val),
                log,
            })
        }
        None => Ok(TrainOutcome {
            model,
            adam,
            best_epoch: 0,
            best_val: None,
            log,
        }),
    }
}

pub fn write_training_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    super::cv::write_csv_rows(path, log)
}
