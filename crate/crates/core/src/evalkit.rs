//! Classification metrics and the cross-validation protocol.
//!
//! Confusion matrices use rows = actual class, columns = predicted class.
//! Per-class precision, recall, and F1 derive one-vs-rest from the matrix;
//! macro averages are unweighted means over classes that appear in the
//! evaluation set; accuracy is trace over total. Metrics with a `0/0` form
//! evaluate to 0.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {actual} actual vs {predicted} predicted labels")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("matrix is empty or not square")]
    BadMatrix,
    #[error("negative count in confusion matrix")]
    NegativeCount,
    #[error("metrics over an empty matrix (total count is zero)")]
    EmptyTotal,
    #[error("k must be >= 2, got {0}")]
    BadK(usize),
    #[error("class {class} has {count} samples, fewer than k = {k}")]
    ClassTooSmall { class: usize, count: usize, k: usize },
    #[error("round {round} out of range for k = {k}")]
    BadRound { round: usize, k: usize },
}

/// Counts of (actual, predicted) pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    /// Row-major counts, `counts[actual * n_classes + predicted]`.
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zero(n_classes: usize) -> Self {
        ConfusionMatrix {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_counts(n_classes: usize, counts: Vec<u64>) -> Result<Self, EvalError> {
        if n_classes == 0 || counts.len() != n_classes * n_classes {
            return Err(EvalError::BadMatrix);
        }
        Ok(ConfusionMatrix { n_classes, counts })
    }

    pub fn at(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual * self.n_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|c| self.at(c, c)).sum()
    }

    /// Row sum: how many samples of class `c` the evaluation set contains.
    pub fn support(&self, c: usize) -> u64 {
        (0..self.n_classes).map(|p| self.at(c, p)).sum()
    }

    fn column_sum(&self, c: usize) -> u64 {
        (0..self.n_classes).map(|a| self.at(a, c)).sum()
    }

    /// One-vs-rest (TP, FP, FN, TN) for class `c`.
    pub fn one_vs_rest(&self, c: usize) -> (u64, u64, u64, u64) {
        let tp = self.at(c, c);
        let fp = self.column_sum(c) - tp;
        let fn_ = self.support(c) - tp;
        let tn = self.total() - tp - fp - fn_;
        (tp, fp, fn_, tn)
    }
}

/// Builds a confusion matrix from paired label streams.
pub fn confusion_matrix(
    actual: &[usize],
    predicted: &[usize],
    n_classes: usize,
) -> Result<ConfusionMatrix, EvalError> {
    if actual.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    let mut cm = ConfusionMatrix::zero(n_classes);
    for (&a, &p) in actual.iter().zip(predicted) {
        for &label in [a, p].iter() {
            if label >= n_classes {
                return Err(EvalError::LabelOutOfRange { label, n_classes });
            }
        }
        cm.counts[a * n_classes + p] += 1;
    }
    Ok(cm)
}

fn safe_div(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Precision, recall, F1, and support for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Per-class metrics for class `c`: `precision = TP/(TP+FP)`,
/// `recall = TP/(TP+FN)`, F1 the harmonic mean (0 when both are 0).
pub fn class_metrics(cm: &ConfusionMatrix, c: usize) -> ClassMetrics {
    let (tp, fp, fn_, _) = cm.one_vs_rest(c);
    let precision = safe_div(tp as f64, (tp + fp) as f64);
    let recall = safe_div(tp as f64, (tp + fn_) as f64);
    let f1 = safe_div(2.0 * precision * recall, precision + recall);
    ClassMetrics {
        precision,
        recall,
        f1,
        support: cm.support(c),
    }
}

/// Unweighted mean of per-class F1 over classes with nonzero support.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    Ok(report(cm)?.macro_f1)
}

/// Fraction of correctly classified samples: trace over total.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyTotal);
    }
    Ok(cm.trace() as f64 / cm.total() as f64)
}

/// The full evaluation summary derived from one confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub total_support: u64,
}

/// Computes the report. Macro averages run over classes with nonzero
/// support so absent classes do not drag the mean to zero.
pub fn report(cm: &ConfusionMatrix) -> Result<EvalReport, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyTotal);
    }
    let per_class: Vec<ClassMetrics> = (0..cm.n_classes).map(|c| class_metrics(cm, c)).collect();
    let present: Vec<&ClassMetrics> = per_class.iter().filter(|m| m.support > 0).collect();
    let n = present.len() as f64;
    Ok(EvalReport {
        macro_precision: present.iter().map(|m| m.precision).sum::<f64>() / n,
        macro_recall: present.iter().map(|m| m.recall).sum::<f64>() / n,
        macro_f1: present.iter().map(|m| m.f1).sum::<f64>() / n,
        accuracy: cm.trace() as f64 / cm.total() as f64,
        total_support: cm.total(),
        per_class,
    })
}

/// Renders the report as a per-class table plus macro row and accuracy,
/// followed by the raw confusion matrix.
pub fn render_report(cm: &ConfusionMatrix, labels: &[&str]) -> Result<String, EvalError> {
    let rep = report(cm)?;
    let name_width = labels
        .iter()
        .map(|l| l.len())
        .max()
        .unwrap_or(10)
        .max("macro avg".len());
    let mut out = String::new();
    out.push_str(&format!(
        "{:<name_width$}  {:>9}  {:>9}  {:>9}  {:>8}\n",
        "", "precision", "recall", "f1-score", "support"
    ));
    for (c, m) in rep.per_class.iter().enumerate() {
        let label = labels.get(c).copied().unwrap_or("?");
        out.push_str(&format!(
            "{label:<name_width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>8}\n",
            m.precision, m.recall, m.f1, m.support
        ));
    }
    out.push_str(&format!(
        "{:<name_width$}  {:>9}  {:>9}  {:>9.4}  {:>8}\n",
        "accuracy", "", "", rep.accuracy, rep.total_support
    ));
    out.push_str(&format!(
        "{:<name_width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>8}\n",
        "macro avg", rep.macro_precision, rep.macro_recall, rep.macro_f1, rep.total_support
    ));
    out.push_str("\nconfusion matrix (rows = actual, columns = predicted):\n");
    for a in 0..cm.n_classes {
        for p in 0..cm.n_classes {
            out.push_str(&format!("{:>6}", cm.at(a, p)));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Train / validation / test membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        };
        f.write_str(s)
    }
}

/// Per-sample fold ids plus the per-class shuffled order needed to cut each
/// held-out fold into validation and test halves.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold id per sample, parallel to the label slice it was built from.
    pub fold_of: Vec<usize>,
    /// `order[class][fold]` = sample indices in shuffled order.
    order: Vec<Vec<Vec<usize>>>,
    n_samples: usize,
}

/// Per-sample fold and split assignment for one cross-validation round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold: Vec<usize>,
    pub split: Vec<Split>,
}

/// Stratified k-fold partition: within each class, a seeded shuffle is cut
/// into k near-equal folds (sizes differ by at most one).
pub fn stratified_kfold(
    labels: &[usize],
    n_classes: usize,
    k: usize,
    seed: u64,
) -> Result<FoldPlan, EvalError> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if k < 2 {
        return Err(EvalError::BadK(k));
    }
    for (i, &label) in labels.iter().enumerate() {
        if label >= n_classes {
            return Err(EvalError::LabelOutOfRange {
                label,
                n_classes,
            });
        }
        let _ = i;
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; labels.len()];
    let mut order = vec![vec![Vec::new(); k]; n_classes];
    for class in 0..n_classes {
        let mut indices: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if indices.len() < k {
            return Err(EvalError::ClassTooSmall {
                class,
                count: indices.len(),
                k,
            });
        }
        indices.shuffle(&mut rng);
        let n = indices.len();
        let base = n / k;
        let extra = n % k;
        let mut pos = 0usize;
        for (fold, slot) in order[class].iter_mut().enumerate() {
            let size = base + usize::from(fold < extra);
            for &idx in &indices[pos..pos + size] {
                fold_of[idx] = fold;
                slot.push(idx);
            }
            pos += size;
        }
    }
    Ok(FoldPlan {
        k,
        fold_of,
        order,
        n_samples: labels.len(),
    })
}

impl FoldPlan {
    /// Split assignment for one round: fold `round` is held out, its first
    /// half per class (shuffled order) is validation and the second half is
    /// test; every other fold trains.
    pub fn round(&self, round: usize) -> Result<FoldAssignment, EvalError> {
        if round >= self.k {
            return Err(EvalError::BadRound { round, k: self.k });
        }
        let mut split = vec![Split::Train; self.n_samples];
        for class_folds in &self.order {
            let held = &class_folds[round];
            let half = held.len() / 2;
            for (pos, &idx) in held.iter().enumerate() {
                split[idx] = if pos < half { Split::Val } else { Split::Test };
            }
        }
        Ok(FoldAssignment {
            fold: self.fold_of.clone(),
            split,
        })
    }
}
