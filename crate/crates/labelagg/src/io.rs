//! Label, gold and prediction files.
//!
//! Sparse label files hold one `item<TAB>worker<TAB>label` record per line;
//! gold files hold `item<TAB>label`. Labels are 1-based, lines starting with
//! `#` and blank lines are skipped. Item and worker ids are opaque strings
//! and are reindexed densely in order of first appearance.
//!
//! The dense layout has one line per item and one whitespace-separated
//! column per worker, `-1` meaning "not labeled". Row and column numbers
//! (0-based) become the item and worker ids.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use labelagg_core::{GoldLabels, LabelMatrix, Predictions};

use crate::error::{Error, Result};

/// A label matrix together with the external ids it was loaded from.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub labels: LabelMatrix,
    pub item_ids: Vec<String>,
    pub worker_ids: Vec<String>,
}

impl Dataset {
    /// Dataset whose external ids are the internal indices.
    pub fn from_matrix(labels: LabelMatrix) -> Self {
        let item_ids = (0..labels.num_items()).map(|i| i.to_string()).collect();
        let worker_ids = (0..labels.num_workers()).map(|k| k.to_string()).collect();
        Self { labels, item_ids, worker_ids }
    }

    pub fn item_index(&self) -> HashMap<&str, usize> {
        self.item_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }
}

fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn parse_label(field: &str, line: usize, num_classes: usize) -> Result<usize> {
    let value: i64 = field.trim().parse().map_err(|_| Error::parse(line, format!("bad label {field:?}")))?;
    if value < 1 || value as u64 > num_classes as u64 {
        return Err(labelagg_core::Error::InvalidLabel { label: value, num_classes }.into());
    }
    Ok(value as usize - 1)
}

fn intern(ids: &mut Vec<String>, index: &mut HashMap<String, usize>, id: &str) -> usize {
    if let Some(&i) = index.get(id) {
        return i;
    }
    ids.push(id.to_owned());
    index.insert(id.to_owned(), ids.len() - 1);
    ids.len() - 1
}

pub fn parse_sparse_labels(text: &str, num_classes: usize) -> Result<Dataset> {
    let mut item_ids = Vec::new();
    let mut worker_ids = Vec::new();
    let mut item_index = HashMap::new();
    let mut worker_index = HashMap::new();
    let mut triples = Vec::new();
    for (line, record) in records(text) {
        let fields: Vec<&str> = record.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(line, format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let label = parse_label(fields[2], line, num_classes)?;
        let item = intern(&mut item_ids, &mut item_index, fields[0].trim());
        let worker = intern(&mut worker_ids, &mut worker_index, fields[1].trim());
        triples.push((item, worker, label));
    }
    let labels = LabelMatrix::from_entries(item_ids.len(), worker_ids.len(), num_classes, triples)?;
    Ok(Dataset { labels, item_ids, worker_ids })
}

pub fn parse_dense_labels(text: &str, num_classes: usize) -> Result<Dataset> {
    let mut rows = Vec::new();
    for (line, record) in records(text) {
        let row = record
            .split_whitespace()
            .map(|f| f.parse::<i64>().map_err(|_| Error::parse(line, format!("bad entry {f:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first().map(Vec::len) {
            if first != row.len() {
                return Err(Error::parse(line, format!("expected {first} columns, found {}", row.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(labelagg_core::Error::EmptyDataset.into());
    }
    Ok(Dataset::from_matrix(LabelMatrix::from_dense(&rows, num_classes)?))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Loads a label file; `dense` selects the `-1`-for-missing matrix layout.
pub fn load_labels(path: &Path, num_classes: usize, dense: bool) -> Result<Dataset> {
    let text = read(path)?;
    if dense {
        parse_dense_labels(&text, num_classes)
    } else {
        parse_sparse_labels(&text, num_classes)
    }
}

/// `(item id, 0-based class)` pairs from a gold or prediction file.
pub fn parse_item_labels(text: &str, num_classes: usize) -> Result<Vec<(String, usize)>> {
    records(text)
        .map(|(line, record)| {
            let fields: Vec<&str> = record.split('\t').collect();
            if fields.len() != 2 {
                return Err(Error::parse(line, format!("expected 2 tab-separated fields, found {}", fields.len())));
            }
            Ok((fields[0].trim().to_owned(), parse_label(fields[1], line, num_classes)?))
        })
        .collect()
}

/// Gold labels keyed by the dataset's item ids. Unknown items are an error.
pub fn gold_for(dataset: &Dataset, pairs: &[(String, usize)]) -> Result<GoldLabels> {
    let index = dataset.item_index();
    let mut mapped = Vec::with_capacity(pairs.len());
    for (id, class) in pairs {
        let &i = index
            .get(id.as_str())
            .ok_or_else(|| Error::Usage(format!("gold item {id:?} does not appear in the label file")))?;
        mapped.push((i, *class));
    }
    Ok(GoldLabels::new(dataset.labels.num_items(), dataset.labels.num_classes(), mapped)?)
}

pub fn load_gold(path: &Path, dataset: &Dataset) -> Result<GoldLabels> {
    let pairs = parse_item_labels(&read(path)?, dataset.labels.num_classes())?;
    gold_for(dataset, &pairs)
}

/// `item_id<TAB>predicted_label`, one line per item, 1-based labels.
pub fn format_predictions(dataset: &Dataset, predictions: &Predictions) -> String {
    let mut out = String::new();
    for (id, &label) in dataset.item_ids.iter().zip(&predictions.labels) {
        let _ = writeln!(out, "{id}\t{}", label + 1);
    }
    out
}

/// `item_id<TAB>p_1<TAB>...<TAB>p_C` with shortest round-trip floats.
pub fn format_posteriors(dataset: &Dataset, predictions: &Predictions) -> String {
    let mut out = String::from("# item");
    for c in 1..=predictions.num_classes {
        let _ = write!(out, "\tp{c}");
    }
    out.push('\n');
    for (i, id) in dataset.item_ids.iter().enumerate() {
        out.push_str(id);
        for p in predictions.posterior_row(i) {
            let _ = write!(out, "\t{p:?}");
        }
        out.push('\n');
    }
    out
}

/// Parses [`format_posteriors`] output back into `(item id, row)` pairs.
pub fn parse_posteriors(text: &str) -> Result<Vec<(String, Vec<f64>)>> {
    records(text)
        .map(|(line, record)| {
            let mut fields = record.split('\t');
            let id = fields.next().unwrap_or_default().to_owned();
            let row = fields
                .map(|f| f.parse::<f64>().map_err(|_| Error::parse(line, format!("bad probability {f:?}"))))
                .collect::<Result<Vec<_>>>()?;
            Ok((id, row))
        })
        .collect()
}
