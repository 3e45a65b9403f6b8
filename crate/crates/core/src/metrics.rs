//! Confusion counts, precision/recall/F1/accuracy, and midrank ROC AUC.
//! The positive class is label 1 (WORD or CIU).

use serde::{Deserialize, Serialize};

use crate::classifiers::{predict_label, ModelKind};
use crate::error::{Error, Result};
use crate::features::Ablation;
use crate::labels::Task;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, gold: bool, pred: bool) {
        match (gold, pred) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

pub fn confusion(gold: &[bool], pred: &[bool]) -> Result<Confusion> {
    check_lengths(gold.len(), pred.len())?;
    let mut c = Confusion::default();
    for (&g, &p) in gold.iter().zip(pred) {
        c.record(g, p);
    }
    Ok(c)
}

pub(crate) fn check_lengths(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Zero denominators give 0 for precision and recall (and so for F1).
pub fn prf1_accuracy(c: &Confusion) -> Prf1 {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    Prf1 {
        precision,
        recall,
        f1: f1_score(precision, recall),
        accuracy: ratio(c.tp + c.tn, c.total()),
    }
}

/// Ascending midranks (1-based, ties share their average rank).
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// Mann-Whitney AUC: `P(pos > neg) + P(tie) / 2`.
pub fn roc_auc(gold: &[bool], scores: &[f64]) -> Result<f64> {
    check_lengths(gold.len(), scores.len())?;
    let n_pos = gold.iter().filter(|&&g| g).count();
    let n_neg = gold.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassEval);
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(gold).filter(|(_, &g)| g).map(|(r, _)| r).sum();
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: ModelKind,
    pub task: Task,
    pub config: Ablation,
    pub fingerprint: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowMeta {
    pub model: ModelKind,
    pub task: Task,
    pub config: Ablation,
    pub fingerprint: String,
}

/// Thresholds `scores` into labels, then builds the row.
pub fn metric_row(gold: &[bool], scores: &[f64], threshold: f64, meta: RowMeta) -> Result<MetricRow> {
    let pred: Vec<bool> = scores.iter().map(|&s| predict_label(s, threshold)).collect();
    metric_row_from_labels(gold, &pred, scores, meta)
}

pub fn metric_row_from_labels(
    gold: &[bool],
    pred: &[bool],
    scores: &[f64],
    meta: RowMeta,
) -> Result<MetricRow> {
    let m = prf1_accuracy(&confusion(gold, pred)?);
    Ok(MetricRow {
        model: meta.model,
        task: meta.task,
        config: meta.config,
        fingerprint: meta.fingerprint,
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        auc: roc_auc(gold, scores)?,
    })
}
