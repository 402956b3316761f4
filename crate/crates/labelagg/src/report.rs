//! Worker reliability and guiding-parameter reports.

use std::fmt::Write as _;

use labelagg_core::eval::{Accuracy, WorkerReport, WorkerReportRow};
use labelagg_core::trainer::{TrainedModel, Warning};
use labelagg_core::{math, GuidingModel};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Dataset;

pub const WORKER_HEADER: &str = "class\tworker\tpredicted\treal\tsupport\tlabels";

/// One line per (class, worker): predicted vs gold-based accuracy. Classes
/// are 1-based; an undefined real accuracy is written as `NA`.
pub fn format_worker_report(report: &WorkerReport, dataset: &Dataset) -> String {
    let mut out = String::from(WORKER_HEADER);
    out.push('\n');
    for r in &report.rows {
        let real = r.real.value.map_or_else(|| "NA".to_owned(), |v| format!("{v:?}"));
        let _ = writeln!(
            out,
            "{}\t{}\t{:?}\t{}\t{}\t{}",
            r.class + 1,
            dataset.worker_ids[r.worker],
            r.predicted,
            real,
            r.real.support,
            r.labels
        );
    }
    out
}

pub fn parse_worker_report(text: &str, dataset: &Dataset) -> Result<Vec<WorkerReportRow>> {
    let workers: std::collections::HashMap<&str, usize> =
        dataset.worker_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.is_empty() || line == WORKER_HEADER {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(Error::parse(line_no, "expected 6 fields"));
        }
        let num =
            |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::parse(line_no, format!("bad number {s:?}"))) };
        let int =
            |s: &str| -> Result<usize> { s.parse().map_err(|_| Error::parse(line_no, format!("bad count {s:?}"))) };
        let class = int(f[0])?.checked_sub(1).ok_or_else(|| Error::parse(line_no, "class must be 1-based"))?;
        let worker = *workers.get(f[1]).ok_or_else(|| Error::parse(line_no, format!("unknown worker {:?}", f[1])))?;
        let value = if f[3] == "NA" { None } else { Some(num(f[3])?) };
        rows.push(WorkerReportRow {
            class,
            worker,
            predicted: num(f[2])?,
            real: Accuracy { value, support: int(f[4])? },
            labels: int(f[5])?,
        });
    }
    Ok(rows)
}

/// Full confusion rows: `class<TAB>worker<TAB>psi_1 ... psi_C`. The diagonal
/// entry of each row is the worker's predicted accuracy on that class.
pub fn format_psi(report: &WorkerReport, dataset: &Dataset) -> Option<String> {
    let psi = report.psi.as_ref()?;
    let (k, c) = (report.num_workers, report.num_classes);
    let mut out = String::from("class\tworker");
    for j in 1..=c {
        let _ = write!(out, "\tpsi{j}");
    }
    out.push('\n');
    for class in 0..c {
        for worker in 0..k {
            let _ = write!(out, "{}\t{}", class + 1, dataset.worker_ids[worker]);
            let start = (class * k + worker) * c;
            for (j, v) in psi[start..start + c].iter().enumerate() {
                // diagonal entries are starred
                let mark = if j == class { "*" } else { "" };
                let _ = write!(out, "\t{v:?}{mark}");
            }
            out.push('\n');
        }
    }
    Some(out)
}

/// Trained guiding parameters: `(lambda, sigmoid(lambda))` per (class,
/// worker) for the ability model, the `psi` rows for the confusion model.
pub fn format_beta(model: &TrainedModel, dataset: &Dataset) -> String {
    let mut out = String::new();
    match &model.guiding {
        GuidingModel::WorkerAbility(p) => {
            out.push_str("class\tworker\tlambda\tsigmoid\n");
            for class in 0..2 {
                for worker in 0..p.num_workers {
                    let l = p.get(class, worker);
                    let _ =
                        writeln!(out, "{}\t{}\t{l:?}\t{:?}", class + 1, dataset.worker_ids[worker], math::sigmoid(l));
                }
            }
        }
        GuidingModel::Confusion(p) => {
            let c = p.num_classes;
            out.push_str("class\tworker");
            for j in 1..=c {
                let _ = write!(out, "\tpsi{j}");
            }
            out.push('\n');
            let psi = labelagg_core::guiding::mc_psi(p);
            for class in 0..c {
                for worker in 0..p.num_workers {
                    let _ = write!(out, "{}\t{}", class + 1, dataset.worker_ids[worker]);
                    for v in psi.row(class, worker) {
                        let _ = write!(out, "\t{v:?}");
                    }
                    out.push('\n');
                }
            }
        }
    }
    out
}

/// Machine-readable run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model: String,
    pub mu: f64,
    pub epochs: usize,
    pub converged: bool,
    pub final_loss: Option<f64>,
    pub mean_reliability: f64,
    pub error_rate: Option<f64>,
    pub warnings: Vec<Warning>,
}

impl Summary {
    pub fn new(model: &TrainedModel, error_rate: Option<f64>) -> Self {
        Self {
            model: match model.kind {
                labelagg_core::ModelKind::NnWa => "nn-wa".into(),
                labelagg_core::ModelKind::NnMc => "nn-mc".into(),
            },
            mu: model.mu,
            epochs: model.loss_history.len(),
            converged: model.converged,
            final_loss: model.loss_history.last().copied(),
            mean_reliability: model.guiding.mean_reliability(),
            error_rate,
            warnings: model.warnings.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary is always serialisable") + "\n"
    }
}
