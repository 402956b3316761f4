//! Reference aggregators: majority voting and Dawid & Skene EM.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{LabelMatrix, Prior};
use crate::error::Result;
use crate::math;
use crate::trainer::Predictions;

/// Per-item vote shares, `N x C`.
pub fn vote_shares(labels: &LabelMatrix) -> Vec<f64> {
    let c = labels.num_classes();
    let mut shares = vec![0.0; labels.num_items() * c];
    for i in 0..labels.num_items() {
        let row = labels.item_labels(i);
        let w = 1.0 / row.len() as f64;
        for &(_, l) in row {
            shares[i * c + l] += w;
        }
    }
    shares
}

/// Most frequent label per item; ties go to the smallest class.
pub fn majority_vote(labels: &LabelMatrix) -> Predictions {
    let c = labels.num_classes();
    let mut counts = vec![0usize; c];
    let predicted = (0..labels.num_items())
        .map(|i| {
            counts.iter_mut().for_each(|n| *n = 0);
            for &(_, l) in labels.item_labels(i) {
                counts[l] += 1;
            }
            let mut best = 0;
            for j in 1..c {
                if counts[j] > counts[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    Predictions { num_classes: c, labels: predicted, posterior: vote_shares(labels), loglik: Vec::new() }
}

/// Row-stochastic `C x C` matrix: row = true class, column = reported label.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    pub values: Vec<f64>,
}

impl ConfusionMatrix {
    pub fn get(&self, truth: usize, reported: usize) -> f64 {
        self.values[truth * self.num_classes + reported]
    }

    pub fn row(&self, truth: usize) -> &[f64] {
        &self.values[truth * self.num_classes..(truth + 1) * self.num_classes]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub max_iters: usize,
    pub tol: f64,
    /// Added to every expected count in the M-step.
    pub smoothing: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { max_iters: 200, tol: 1e-6, smoothing: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DawidSkene {
    pub predictions: Predictions,
    pub confusions: Vec<ConfusionMatrix>,
    pub class_marginals: Prior,
    /// `log p(L | theta_t)` after each iteration's M-step.
    pub log_likelihood: Vec<f64>,
    /// The smoothed objective EM actually ascends: the log-likelihood plus
    /// `smoothing * sum log theta` over every estimated probability.
    pub log_objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Dawid & Skene EM, initialised from majority-vote shares.
///
/// Each iteration runs the M-step on the current posteriors and then the
/// E-step; it stops once no posterior entry moves by `tol` or more.
pub fn dawid_skene_em(labels: &LabelMatrix, config: EmConfig) -> Result<DawidSkene> {
    let (n, k, c) = (labels.num_items(), labels.num_workers(), labels.num_classes());
    let s = config.smoothing;
    let mut post = vote_shares(labels);
    let mut marginals = vec![0.0; c];
    let mut confusion = vec![0.0; k * c * c];
    let mut history = Vec::new();
    let mut objective = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut next = vec![0.0; n * c];
    let mut log_conf = vec![0.0; k * c * c];

    while iterations < config.max_iters {
        iterations += 1;
        // M-step
        marginals.iter_mut().for_each(|m| *m = s);
        confusion.iter_mut().for_each(|m| *m = s);
        for i in 0..n {
            let t = &post[i * c..(i + 1) * c];
            for (m, &p) in marginals.iter_mut().zip(t) {
                *m += p;
            }
            for &(w, l) in labels.item_labels(i) {
                for (truth, &p) in t.iter().enumerate() {
                    confusion[(w * c + truth) * c + l] += p;
                }
            }
        }
        let total: f64 = marginals.iter().sum();
        marginals.iter_mut().for_each(|m| *m /= total);
        for row in confusion.chunks_mut(c) {
            let z: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= z);
        }
        let log_marg: Vec<f64> = marginals.iter().map(|&m| libm::log(m)).collect();
        for (lc, &v) in log_conf.iter_mut().zip(&confusion) {
            *lc = libm::log(v);
        }

        // E-step
        let mut loglik = 0.0;
        let mut delta: f64 = 0.0;
        for i in 0..n {
            let row = &mut next[i * c..(i + 1) * c];
            row.copy_from_slice(&log_marg);
            for &(w, l) in labels.item_labels(i) {
                for (truth, r) in row.iter_mut().enumerate() {
                    *r += log_conf[(w * c + truth) * c + l];
                }
            }
            let lse = math::log_sum_exp(row);
            loglik += lse;
            for (j, r) in row.iter_mut().enumerate() {
                *r = libm::exp(*r - lse);
                delta = delta.max((*r - post[i * c + j]).abs());
            }
        }
        let penalty: f64 = s * (log_marg.iter().sum::<f64>() + log_conf.iter().sum::<f64>());
        history.push(loglik);
        objective.push(loglik + penalty);
        core::mem::swap(&mut post, &mut next);
        if delta < config.tol {
            converged = true;
            break;
        }
    }

    let predicted = (0..n).map(|i| math::argmax(&post[i * c..(i + 1) * c])).collect();
    let confusions = confusion.chunks(c * c).map(|m| ConfusionMatrix { num_classes: c, values: m.to_vec() }).collect();
    Ok(DawidSkene {
        predictions: Predictions { num_classes: c, labels: predicted, posterior: post, loglik: Vec::new() },
        confusions,
        class_marginals: Prior::new(normalised(marginals))?,
        log_likelihood: history,
        log_objective: objective,
        iterations,
        converged,
    })
}

fn normalised(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}
