use std::time::Instant;

use ndarray::{Array3, ArrayView2};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{backward, batch_from_windows, forward_train, loss, predict};
use super::{init_model, ModelBundle, ModelConfig, ModelParams, TrainingConfig};
use crate::error::{Error, Result};
use crate::pipeline::{DatasetSplit, LabeledDataset};
use crate::risk::RiskLabel;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingHistory {
    /// `epoch,train_loss,train_acc,val_loss,val_acc`, one row per completed epoch.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc
            ));
        }
        s
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs
            .iter()
            .fold(None, |best: Option<&EpochRecord>, e| match best {
                Some(b) if b.val_acc >= e.val_acc => Some(b),
                _ => Some(e),
            })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<F> {
    /// Parameters from the epoch with the best validation accuracy.
    pub bundle: ModelBundle<F>,
    pub history: TrainingHistory,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub elapsed_s: f64,
}

struct Adam<F> {
    m: ModelParams<F>,
    v: ModelParams<F>,
    step: i32,
}

impl<F: Scalar> Adam<F> {
    fn new(cfg: &ModelConfig) -> Self {
        Adam {
            m: ModelParams::zeros(cfg),
            v: ModelParams::zeros(cfg),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut ModelParams<F>, grads: &ModelParams<F>, tc: &TrainingConfig) {
        self.step += 1;
        let (b1, b2) = (F::of(tc.beta1), F::of(tc.beta2));
        let one = F::one();
        let lr = F::of(tc.learning_rate);
        let eps = F::of(tc.epsilon);
        let c1 = one - b1.powi(self.step);
        let c2 = one - b2.powi(self.step);
        let gs = grads.slices();
        for (((p, g), m), v) in params
            .slices_mut()
            .into_iter()
            .zip(gs)
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

fn class_weights<F: Scalar>(labels: &[usize], classes: usize) -> Vec<F> {
    let mut counts = vec![0usize; classes];
    for &y in labels {
        counts[y] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count().max(1);
    let n = labels.len() as f64;
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                F::zero()
            } else {
                F::of(n / (present as f64 * c as f64))
            }
        })
        .collect()
}

fn labels_of(dataset: &LabeledDataset, idx: &[usize]) -> Result<Vec<usize>> {
    idx.iter()
        .map(|&i| {
            dataset.windows[i]
                .label()
                .map(RiskLabel::index)
                .ok_or_else(|| Error::validation(format!("window {i} is unlabeled")))
        })
        .collect()
}

fn assemble<F: Scalar>(dataset: &LabeledDataset, idx: &[usize], cfg: &ModelConfig) -> Result<Array3<F>> {
    batch_from_windows(
        idx.iter().map(|&i| dataset.windows[i].values.view()),
        cfg.input_steps,
        cfg.input_features,
    )
}

/// Validation loss and accuracy in inference mode.
fn evaluate<F: Scalar>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    dataset: &LabeledDataset,
    idx: &[usize],
    labels: &[usize],
) -> Result<(f64, f64)> {
    let views: Vec<ArrayView2<f64>> = idx.iter().map(|&i| dataset.windows[i].values.view()).collect();
    let preds = predict(params, cfg, &views)?;
    let mut ce = 0.0;
    let mut correct = 0usize;
    for (p, &y) in preds.iter().zip(labels) {
        ce -= p.probabilities[y].max(1e-12).ln();
        correct += usize::from(p.class == y);
    }
    let n = labels.len() as f64;
    let l2 = cfg.l2_lambda * params.l2_sum().to_f64_lossy();
    Ok((ce / n + l2, correct as f64 / n))
}

/// Trains on a subject-level split.
pub fn train<F: Scalar>(
    dataset: &LabeledDataset,
    split: &DatasetSplit,
    model_cfg: &ModelConfig,
    train_cfg: &TrainingConfig,
) -> Result<TrainOutcome<F>> {
    if !split.train_subjects.is_disjoint(&split.val_subjects) {
        return Err(Error::validation(
            "training and validation subjects overlap",
        ));
    }
    let (train_idx, val_idx) = split.partition(dataset);
    train_on_indices(dataset, &train_idx, &val_idx, model_cfg, train_cfg)
}

/// Mini-batch Adam over `train_idx`, validating on `val_idx` after every epoch and
/// keeping the best-validation-accuracy parameters (earliest epoch on ties).
pub fn train_on_indices<F: Scalar>(
    dataset: &LabeledDataset,
    train_idx: &[usize],
    val_idx: &[usize],
    model_cfg: &ModelConfig,
    train_cfg: &TrainingConfig,
) -> Result<TrainOutcome<F>> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::TooFew {
            what: "windows on each side of the split",
            needed: 1,
            got: 0,
        });
    }
    let started = Instant::now();
    let train_labels = labels_of(dataset, train_idx)?;
    let val_labels = labels_of(dataset, val_idx)?;
    let weights: Option<Vec<F>> = train_cfg
        .class_weighting
        .then(|| class_weights(&train_labels, model_cfg.num_classes));
    let weights = weights.as_deref();

    let mut params: ModelParams<F> = init_model(model_cfg, train_cfg.seed);
    let mut adam = Adam::new(model_cfg);
    let mut order_rng = ChaCha8Rng::seed_from_u64(train_cfg.seed ^ 0x5eed_0bde_u64);
    let mut dropout_rng: Box<dyn RngCore> = if train_cfg.deterministic {
        Box::new(ChaCha8Rng::seed_from_u64(train_cfg.seed.wrapping_add(0xd509)))
    } else {
        Box::new(StdRng::from_os_rng())
    };

    let mut history = TrainingHistory::default();
    let mut best: Option<(usize, f64, ModelParams<F>)> = None;
    let mut order: Vec<usize> = (0..train_idx.len()).collect();

    for epoch in 0..train_cfg.max_epochs {
        order.shuffle(&mut order_rng);
        let slice = epoch % train_cfg.train_subsample;
        let visit: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(k, _)| k % train_cfg.train_subsample == slice)
            .map(|(_, &o)| o)
            .collect();

        let (mut loss_sum, mut correct, mut seen) = (0.0f64, 0usize, 0usize);
        for (bno, chunk) in visit.chunks(train_cfg.batch_size).enumerate() {
            let idx: Vec<usize> = chunk.iter().map(|&o| train_idx[o]).collect();
            let labels: Vec<usize> = chunk.iter().map(|&o| train_labels[o]).collect();
            let x: Array3<F> = assemble(dataset, &idx, model_cfg)?;
            let cache = forward_train(&params, model_cfg, x.view(), dropout_rng.as_mut())?;
            let l = loss(cache.probs.view(), &labels, &params, model_cfg.l2_lambda, weights)?;
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bno });
            }
            for (row, &y) in cache.probs.rows().into_iter().zip(&labels) {
                let mut arg = 0;
                for c in 1..row.len() {
                    if row[c] >= row[arg] {
                        arg = c;
                    }
                }
                correct += usize::from(arg == y);
            }
            loss_sum += l.to_f64_lossy() * labels.len() as f64;
            seen += labels.len();

            let grads = backward(&params, model_cfg, &cache, &labels, weights)?;
            adam.update(&mut params, &grads, train_cfg);
            if let Some(tensor) = params.first_non_finite() {
                return Err(Error::NonFiniteParams {
                    tensor,
                    epoch,
                    batch: bno,
                });
            }
        }

        let (val_loss, val_acc) = evaluate(&params, model_cfg, dataset, val_idx, &val_labels)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
            val_loss,
            val_acc,
        };
        log::info!(
            "epoch {:>3}  loss {:.4}  acc {:.4}  val_loss {:.4}  val_acc {:.4}  ({:.1}s)",
            record.epoch,
            record.train_loss,
            record.train_acc,
            record.val_loss,
            record.val_acc,
            started.elapsed().as_secs_f64()
        );
        history.epochs.push(record);

        if best.as_ref().is_none_or(|(_, acc, _)| val_acc > *acc) {
            best = Some((epoch + 1, val_acc, params.clone()));
        }
        if let (Some(patience), Some((best_epoch, _, _))) = (train_cfg.patience, &best) {
            if epoch + 1 - best_epoch >= patience {
                break;
            }
        }
    }

    let (best_epoch, best_val_acc, best_params) = best.expect("max_epochs >= 1");
    Ok(TrainOutcome {
        bundle: ModelBundle::new(model_cfg.clone(), best_params).with_training(train_cfg.clone()),
        history,
        best_epoch,
        best_val_acc,
        elapsed_s: started.elapsed().as_secs_f64(),
    })
}
