//! Metrics and experiment harnesses.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{train_on_indices, ModelConfig, TrainingConfig};
use crate::pipeline::{random_window_split, split_by_subject, LabeledDataset};
use crate::risk::RiskLabel;
use crate::scalar::Scalar;

const K: usize = 4;

/// Rows are true labels, columns predictions, both in ascending risk order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; K]; K],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..K).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }
}

pub fn confusion_matrix(truth: &[RiskLabel], predicted: &[RiskLabel]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: predicted.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in truth.iter().zip(predicted) {
        cm.counts[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: RiskLabel,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// False when the predicted column was empty and precision was reported as 0.
    pub precision_defined: bool,
    /// False when the true row was empty and recall was reported as 0.
    pub recall_defined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::validation("confusion matrix is empty"));
    }
    let per_class = RiskLabel::ALL
        .iter()
        .map(|&label| {
            let i = label.index();
            let tp = cm.counts[i][i] as f64;
            let (col, row) = (cm.col_sum(i), cm.row_sum(i));
            let precision = if col > 0 { tp / col as f64 } else { 0.0 };
            let recall = if row > 0 { tp / row as f64 } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                label,
                support: row,
                precision,
                recall,
                f1,
                precision_defined: col > 0,
                recall_defined: row > 0,
            }
        })
        .collect();
    Ok(Metrics {
        accuracy: cm.trace() as f64 / total as f64,
        per_class,
    })
}

/// Mann-Whitney AUC with midranks for tied scores. `None` when either class is
/// absent.
pub fn auc_midrank(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum_pos += mid * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// ROC points `(fpr, tpr, threshold)` from the highest threshold down.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Vec<(f64, f64, f64)> {
    let n_pos = positive.iter().filter(|&&p| p).count().max(1) as f64;
    let n_neg = positive.iter().filter(|&&p| !p).count().max(1) as f64;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0, f64::INFINITY)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let thr = scores[order[i]];
        while i < order.len() && scores[order[i]] == thr {
            if positive[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push((fp / n_neg, tp / n_pos, thr));
    }
    points
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    /// One-vs-rest AUC per class in risk order; `None` if the class is absent or
    /// universal.
    pub per_class: Vec<Option<f64>>,
    /// Mean over the defined per-class values.
    pub macro_auc: Option<f64>,
}

pub fn roc_auc_ovr(probabilities: ArrayView2<f64>, truth: &[RiskLabel]) -> Result<AucReport> {
    if probabilities.nrows() != truth.len() {
        return Err(Error::LengthMismatch {
            left: probabilities.nrows(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::validation("no samples for AUC"));
    }
    if probabilities.ncols() != K {
        return Err(Error::ShapeMismatch {
            expected: format!("N x {K}"),
            actual: format!("{:?}", probabilities.dim()),
        });
    }
    let per_class: Vec<Option<f64>> = (0..K)
        .map(|c| {
            let scores: Vec<f64> = probabilities.column(c).to_vec();
            let positive: Vec<bool> = truth.iter().map(|t| t.index() == c).collect();
            auc_midrank(&scores, &positive)
        })
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_auc = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(AucReport {
        per_class,
        macro_auc,
    })
}

/// Writes `fpr,tpr,threshold` for one class.
pub fn write_roc_csv(path: &Path, points: &[(f64, f64, f64)]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut s = String::from("fpr,tpr,threshold\n");
    for (fpr, tpr, thr) in points {
        s.push_str(&format!("{fpr},{tpr},{thr}\n"));
    }
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Shuffles the distinct subjects by `seed` and deals them round-robin into `k`
/// validation groups.
pub fn grouped_kfold(subject_ids: &[String], k: usize, seed: u64) -> Result<Vec<BTreeSet<String>>> {
    if k < 2 {
        return Err(Error::validation(format!("k-fold needs k >= 2, got {k}")));
    }
    let mut ids: Vec<String> = subject_ids
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if ids.len() < k {
        return Err(Error::TooFew {
            what: "subjects for k-fold",
            needed: k,
            got: ids.len(),
        });
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![BTreeSet::new(); k];
    for (i, id) in ids.into_iter().enumerate() {
        folds[i % k].insert(id);
    }
    Ok(folds)
}

/// SHA-256 over the model config, training config and dataset digest.
pub fn config_fingerprint(model_cfg: &ModelConfig, train_cfg: &TrainingConfig, dataset_digest: &str) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(model_cfg).expect("config serializes"));
    h.update(serde_json::to_vec(train_cfg).expect("config serializes"));
    h.update(dataset_digest.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_subjects: BTreeSet<String>,
    pub val_subjects: BTreeSet<String>,
    pub accuracy: f64,
    pub best_epoch: usize,
    pub train_windows: usize,
    pub val_windows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of the fold accuracies.
    pub std: f64,
    pub fingerprint: String,
    pub model_config: ModelConfig,
    pub training_config: TrainingConfig,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Subject-grouped k-fold cross-validation. Each fold trains a fresh model with the
/// same training config and reports accuracy on its held-out subjects.
pub fn run_cv<F: Scalar>(
    dataset: &LabeledDataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainingConfig,
    k: usize,
    seed: u64,
) -> Result<CvReport> {
    let subjects = dataset.subjects();
    let groups = grouped_kfold(&subjects, k, seed)?;
    let mut folds = Vec::with_capacity(k);
    for (fold, val_subjects) in groups.into_iter().enumerate() {
        let train_subjects: BTreeSet<String> = subjects
            .iter()
            .filter(|s| !val_subjects.contains(*s))
            .cloned()
            .collect();
        assert!(train_subjects.is_disjoint(&val_subjects));
        let train_idx = dataset.indices_for(&train_subjects);
        let val_idx = dataset.indices_for(&val_subjects);
        log::info!("fold {}/{k}: validating on {val_subjects:?}", fold + 1);
        let outcome = train_on_indices::<F>(dataset, &train_idx, &val_idx, model_cfg, train_cfg)?;
        folds.push(FoldResult {
            fold,
            train_subjects,
            val_subjects,
            accuracy: outcome.best_val_acc,
            best_epoch: outcome.best_epoch,
            train_windows: train_idx.len(),
            val_windows: val_idx.len(),
        });
    }
    let accuracies: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
    let (mean, std) = mean_std(&accuracies);
    Ok(CvReport {
        k,
        seed,
        folds,
        accuracies,
        mean,
        std,
        fingerprint: config_fingerprint(model_cfg, train_cfg, &dataset.digest()),
        model_config: model_cfg.clone(),
        training_config: train_cfg.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    /// Windows shuffled regardless of subject.
    RandomWindow,
    /// Whole subjects on each side.
    Subject,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRun {
    pub strategy: SplitStrategy,
    pub accuracy: f64,
    pub best_epoch: usize,
    pub train_windows: usize,
    pub test_windows: usize,
}

/// Trains with an 80/20 split of the given kind and returns held-out accuracy.
pub fn run_split<F: Scalar>(
    dataset: &LabeledDataset,
    strategy: SplitStrategy,
    model_cfg: &ModelConfig,
    train_cfg: &TrainingConfig,
    split_seed: u64,
) -> Result<SplitRun> {
    let (train_idx, test_idx) = match strategy {
        SplitStrategy::RandomWindow => random_window_split(dataset.len(), 0.8, split_seed)?,
        SplitStrategy::Subject => split_by_subject(&dataset.subjects(), 0.8, split_seed)?.partition(dataset),
    };
    let outcome = train_on_indices::<F>(dataset, &train_idx, &test_idx, model_cfg, train_cfg)?;
    Ok(SplitRun {
        strategy,
        accuracy: outcome.best_val_acc,
        best_epoch: outcome.best_epoch,
        train_windows: train_idx.len(),
        test_windows: test_idx.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub accuracy_random_split: f64,
    pub accuracy_subject_split: f64,
    /// Random-split accuracy minus subject-split accuracy.
    pub gap: f64,
    pub split_seed: u64,
    pub training_seed: u64,
    pub subjects: usize,
    pub windows: usize,
    pub fingerprint: String,
    pub runs: Vec<SplitRun>,
}

/// Trains twice from the same initialization: once on a leaky random-window split,
/// once on a subject-level split.
pub fn leakage_experiment<F: Scalar>(
    dataset: &LabeledDataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainingConfig,
    seed: u64,
) -> Result<LeakageReport> {
    let subjects = dataset.subjects();
    if subjects.len() < 2 {
        return Err(Error::TooFew {
            what: "subjects",
            needed: 2,
            got: subjects.len(),
        });
    }
    let random = run_split::<F>(dataset, SplitStrategy::RandomWindow, model_cfg, train_cfg, seed)?;
    let subject = run_split::<F>(dataset, SplitStrategy::Subject, model_cfg, train_cfg, seed)?;
    Ok(LeakageReport {
        accuracy_random_split: random.accuracy,
        accuracy_subject_split: subject.accuracy,
        gap: random.accuracy - subject.accuracy,
        split_seed: seed,
        training_seed: train_cfg.seed,
        subjects: subjects.len(),
        windows: dataset.len(),
        fingerprint: config_fingerprint(model_cfg, train_cfg, &dataset.digest()),
        runs: vec![random, subject],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use RiskLabel::*;

    #[test]
    fn confusion_examples() {
        let t = [RunAsUsual, ShowWarning, LimitAccess, InformBackupPerson];
        let cm = confusion_matrix(&t, &t).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(cm.counts[i][j], u64::from(i == j));
            }
        }
        let m = metrics(&cm).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert!(m.per_class.iter().all(|c| c.precision == 1.0 && c.recall == 1.0));

        let cm = confusion_matrix(&[ShowWarning], &[RunAsUsual]).unwrap();
        assert_eq!(cm.counts[1][0], 1);
        assert_eq!(cm.total(), 1);
        let m = metrics(&cm).unwrap();
        assert_eq!(m.per_class[1].precision, 0.0);
        assert!(!m.per_class[1].precision_defined);
        assert_eq!(m.per_class[0].precision, 0.0);
        assert!(m.per_class[0].precision_defined);

        assert!(confusion_matrix(&[RunAsUsual], &[]).is_err());
        assert!(metrics(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn uniform_matrix_accuracy() {
        let cm = ConfusionMatrix {
            counts: [[1; 4]; 4],
        };
        assert_eq!(metrics(&cm).unwrap().accuracy, 0.25);
    }

    #[test]
    fn auc_examples() {
        let scores = [0.9, 0.8, 0.7, 0.3, 0.2, 0.1];
        let pos = [true, true, true, false, false, false];
        assert_eq!(auc_midrank(&scores, &pos), Some(1.0));
        assert_eq!(auc_midrank(&[0.5; 6], &pos), Some(0.5));
        assert_eq!(auc_midrank(&scores, &[true; 6]), None);

        // hand case: pairs (pos, neg) = 9; wins: 0.8>0.6,0.8>0.4,0.8=0.8 (half),
        // 0.4 = 0.4 (half), 0.4<0.6, 0.4<0.8, 0.9 beats all three
        let scores = [0.8, 0.4, 0.9, 0.6, 0.4, 0.8];
        let pos = [true, true, true, false, false, false];
        let expected = (2.5 + 0.5 + 3.0) / 9.0;
        assert!((auc_midrank(&scores, &pos).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn roc_curve_endpoints() {
        let pts = roc_curve(&[0.9, 0.1, 0.5, 0.5], &[true, false, true, false]);
        assert_eq!(pts.first().unwrap().0, 0.0);
        let last = pts.last().unwrap();
        assert_eq!((last.0, last.1), (1.0, 1.0));
    }

    #[test]
    fn kfold_examples() {
        let ids: Vec<String> = (0..14).map(|i| format!("S{i:02}")).collect();
        let folds = grouped_kfold(&ids, 5, 1).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(BTreeSet::len).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, vec![3, 3, 3, 3, 2]);
        let union: BTreeSet<String> = folds.iter().flatten().cloned().collect();
        assert_eq!(union.len(), 14);
        assert_eq!(folds.iter().map(BTreeSet::len).sum::<usize>(), 14);
        assert_eq!(folds, grouped_kfold(&ids, 5, 1).unwrap());
        assert!(grouped_kfold(&ids, 1, 1).is_err());
        assert!(grouped_kfold(&ids[..3], 5, 1).is_err());
    }
}
