//! Synthetic crowds with planted ground truth.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{GoldLabels, LabelMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum WorkerModel {
    /// Per-worker probability of reporting the true class; errors are
    /// spread uniformly over the other classes.
    Ability(Vec<f64>),
    /// Per-worker row-stochastic `C × C` matrix, row = true class,
    /// column = reported label, flattened row-major.
    Confusion(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum LabelsPerItem {
    Fixed(usize),
    /// Uniform on `min..=max`.
    Uniform {
        min: usize,
        max: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthConfig {
    pub num_items: usize,
    pub num_workers: usize,
    pub num_classes: usize,
    /// Distribution of the gold labels; uniform when `None`.
    pub class_prior: Option<Vec<f64>>,
    pub workers: WorkerModel,
    pub labels_per_item: LabelsPerItem,
    pub seed: u64,
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let (k, c) = (self.num_workers, self.num_classes);
        if self.num_items == 0 || k == 0 {
            return Err(Error::InvalidConfig("need at least one item and one worker"));
        }
        if c < 2 {
            return Err(Error::InvalidConfig("need at least two classes"));
        }
        if let Some(p) = &self.class_prior {
            let sum: f64 = p.iter().sum();
            if p.len() != c || p.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig("class prior must be a distribution over C classes"));
            }
        }
        match &self.workers {
            WorkerModel::Ability(acc) => {
                if acc.len() != k {
                    return Err(Error::InvalidConfig("one accuracy per worker required"));
                }
                if acc.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
                    return Err(Error::InvalidConfig("planted accuracies must lie in [0, 1]"));
                }
            }
            WorkerModel::Confusion(rows) => {
                if rows.len() != k || rows.iter().any(|m| m.len() != c * c) {
                    return Err(Error::InvalidConfig("one C x C confusion matrix per worker required"));
                }
                for m in rows {
                    for row in m.chunks(c) {
                        let sum: f64 = row.iter().sum();
                        if row.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                            return Err(Error::InvalidConfig("confusion rows must sum to 1"));
                        }
                    }
                }
            }
        }
        let (lo, hi) = match self.labels_per_item {
            LabelsPerItem::Fixed(m) => (m, m),
            LabelsPerItem::Uniform { min, max } => (min, max),
        };
        if lo < 1 || lo > hi || hi > k {
            return Err(Error::InvalidConfig("labels per item must lie in [1, K]"));
        }
        Ok(())
    }
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap at the top; take the last class with mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Draws gold labels, then every observed label from the planted worker
/// model. Bit-reproducible for a given config.
pub fn generate_synthetic(config: &SynthConfig) -> Result<(LabelMatrix, GoldLabels)> {
    config.validate()?;
    let (n, k, c) = (config.num_items, config.num_workers, config.num_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let prior = config.class_prior.clone().unwrap_or_else(|| vec![1.0 / c as f64; c]);

    let mut gold = Vec::with_capacity(n);
    let mut triples = Vec::new();
    let mut row = vec![0.0; c];
    for item in 0..n {
        let truth = sample_categorical(&prior, &mut rng);
        gold.push(truth);
        let m = match config.labels_per_item {
            LabelsPerItem::Fixed(m) => m,
            LabelsPerItem::Uniform { min, max } => rng.random_range(min..=max),
        };
        let mut workers = index::sample(&mut rng, k, m).into_vec();
        workers.sort_unstable();
        for w in workers {
            let label = match &config.workers {
                WorkerModel::Ability(acc) => {
                    let wrong = (1.0 - acc[w]) / (c - 1) as f64;
                    row.iter_mut().for_each(|p| *p = wrong);
                    row[truth] = acc[w];
                    sample_categorical(&row, &mut rng)
                }
                WorkerModel::Confusion(rows) => sample_categorical(&rows[w][truth * c..(truth + 1) * c], &mut rng),
            };
            triples.push((item, w, label));
        }
    }
    let labels = LabelMatrix::from_entries(n, k, c, triples)?;
    let gold = GoldLabels::complete(c, &gold)?;
    Ok((labels, gold))
}

/// `num_workers` accuracies drawn uniformly from `[lo, hi]`.
pub fn planted_accuracies(num_workers: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_workers).map(|_| rng.random_range(lo..=hi)).collect()
}

/// Diagonal-dominant confusion matrices: each row's diagonal is drawn from
/// `[lo, hi]` and the remainder is split over the other columns with random
/// proportions.
pub fn planted_confusions(num_workers: usize, num_classes: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<f64>> {
    let c = num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_workers)
        .map(|_| {
            let mut m = vec![0.0; c * c];
            for t in 0..c {
                let d: f64 = rng.random_range(lo..=hi);
                let weights: Vec<f64> = (0..c - 1).map(|_| rng.random_range(0.5..1.5)).collect();
                let total: f64 = weights.iter().sum();
                let mut w = weights.iter();
                for j in 0..c {
                    m[t * c + j] = if j == t { d } else { (1.0 - d) * w.next().unwrap() / total };
                }
            }
            m
        })
        .collect()
}
