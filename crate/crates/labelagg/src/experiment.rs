//! Error-rate sweeps over mu and seeds, for comparing against published
//! numbers on real datasets.

use labelagg_core::eval;
use labelagg_core::trainer::{self, Decoder, ModelKind, TrainConfig};
use labelagg_core::GoldLabels;

use crate::error::Result;
use crate::io::Dataset;

/// Published reference error rates (percent) for the four real datasets.
pub const REFERENCE_ERRORS: [(&str, usize, ModelKind, f64); 6] = [
    ("adult", 4, ModelKind::NnMc, 21.60),
    ("rte", 2, ModelKind::NnMc, 7.13),
    ("heart", 2, ModelKind::NnMc, 12.66),
    ("age", 7, ModelKind::NnMc, 30.18),
    ("rte", 2, ModelKind::NnWa, 7.28),
    ("heart", 2, ModelKind::NnWa, 12.24),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub mu: f64,
    pub seed: u64,
    pub error_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub runs: Vec<Run>,
}

impl Sweep {
    pub fn best(&self) -> Option<&Run> {
        self.runs.iter().min_by(|a, b| a.error_rate.total_cmp(&b.error_rate))
    }

    /// Mean error over seeds for each mu, in grid order.
    pub fn mean_by_mu(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64, usize)> = Vec::new();
        for r in &self.runs {
            match out.iter_mut().find(|(mu, _, _)| *mu == r.mu) {
                Some(e) => {
                    e.1 += r.error_rate;
                    e.2 += 1;
                }
                None => out.push((r.mu, r.error_rate, 1)),
            }
        }
        out.into_iter().map(|(mu, s, n)| (mu, s / n as f64)).collect()
    }
}

/// Trains `base` once per (mu, seed) and scores each run against gold.
/// Failed runs are skipped.
pub fn sweep(dataset: &Dataset, gold: &GoldLabels, base: &TrainConfig, seeds: &[u64]) -> Result<Sweep> {
    let mut runs = Vec::new();
    for &mu in &base.mu_grid {
        for &seed in seeds {
            let cfg = TrainConfig { mu, seed, ..base.clone() };
            let Ok(model) = trainer::train(&dataset.labels, &cfg) else { continue };
            let pred = trainer::predict(&model, &dataset.labels, Decoder::Mle)?;
            runs.push(Run { mu, seed, error_rate: eval::prediction_error_rate(&pred, gold)? });
        }
    }
    Ok(Sweep { runs })
}

pub fn default_config(kind: ModelKind) -> TrainConfig {
    TrainConfig::new(kind)
}
