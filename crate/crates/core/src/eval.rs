//! Error rates and worker-reliability reports against gold labels.

use alloc::vec::Vec;

use crate::data::{GoldLabels, LabelMatrix};
use crate::error::{Error, Result};
use crate::guiding::GuidingModel;
use crate::trainer::{ModelKind, Predictions, TrainedModel};

/// Fraction of gold-covered items whose prediction differs from gold.
pub fn error_rate(predicted: &[usize], gold: &GoldLabels) -> Result<f64> {
    let mut scored = 0usize;
    let mut wrong = 0usize;
    for (item, truth) in gold.iter() {
        if let Some(&p) = predicted.get(item) {
            scored += 1;
            if p != truth {
                wrong += 1;
            }
        }
    }
    if scored == 0 {
        return Err(Error::NoGoldOverlap);
    }
    Ok(wrong as f64 / scored as f64)
}

pub fn prediction_error_rate(predictions: &Predictions, gold: &GoldLabels) -> Result<f64> {
    error_rate(&predictions.labels, gold)
}

/// A ratio with its denominator; `value` is `None` when the support is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Accuracy {
    pub value: Option<f64>,
    pub support: usize,
}

/// Among gold-class-`class` items that `worker` labeled, the fraction it
/// labeled `class`.
pub fn worker_accuracy(labels: &LabelMatrix, gold: &GoldLabels, class: usize, worker: usize) -> Accuracy {
    let mut support = 0usize;
    let mut correct = 0usize;
    for (item, truth) in gold.iter() {
        if truth != class || item >= labels.num_items() {
            continue;
        }
        if let Some(l) = labels.label(item, worker) {
            support += 1;
            if l == class {
                correct += 1;
            }
        }
    }
    Accuracy { value: (support > 0).then(|| correct as f64 / support as f64), support }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WorkerReportRow {
    pub class: usize,
    pub worker: usize,
    /// Model's correctness probability for this (class, worker).
    pub predicted: f64,
    /// Gold-based accuracy, if the worker saw any gold item of this class.
    pub real: Accuracy,
    /// Labels this worker gave in total.
    pub labels: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WorkerReport {
    pub kind: ModelKind,
    pub num_classes: usize,
    pub num_workers: usize,
    pub rows: Vec<WorkerReportRow>,
    /// For the confusion model: every `psi[c][k]` row, `(c * K + k) * C + j`.
    pub psi: Option<Vec<f64>>,
}

impl WorkerReport {
    pub fn row(&self, class: usize, worker: usize) -> &WorkerReportRow {
        &self.rows[class * self.num_workers + worker]
    }

    /// Mean of the predicted per-class accuracies of one worker.
    pub fn mean_predicted(&self, worker: usize) -> f64 {
        (0..self.num_classes).map(|c| self.row(c, worker).predicted).sum::<f64>() / self.num_classes as f64
    }
}

/// Pairs each (class, worker) reliability of a trained model with its
/// gold-based counterpart. `gold` may be omitted.
pub fn report_workers(model: &TrainedModel, labels: &LabelMatrix, gold: Option<&GoldLabels>) -> WorkerReport {
    let (k, c) = (model.num_workers, model.num_classes);
    let counts = labels.worker_label_counts();
    let mut rows = Vec::with_capacity(c * k);
    for class in 0..c {
        for worker in 0..k {
            let real = match gold {
                Some(g) => worker_accuracy(labels, g, class, worker),
                None => Accuracy { value: None, support: 0 },
            };
            rows.push(WorkerReportRow {
                class,
                worker,
                predicted: model.guiding.reliability(class, worker),
                real,
                labels: counts.get(worker).copied().unwrap_or(0),
            });
        }
    }
    let psi = match &model.guiding {
        GuidingModel::Confusion(p) => Some(crate::guiding::mc_psi(p).values),
        GuidingModel::WorkerAbility(_) => None,
    };
    WorkerReport { kind: model.kind, num_classes: c, num_workers: k, rows, psi }
}
