//! Sparse label storage, gold labels, the counted class prior, instance
//! encoding and mini-batch sampling.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Observed labels, stored item-major.
///
/// Each item keeps its `(worker, class)` pairs sorted by worker. Missing
/// labels are simply absent; there is no sentinel value in here.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabelMatrix {
    num_items: usize,
    num_workers: usize,
    num_classes: usize,
    offsets: Vec<usize>,
    entries: Vec<(usize, usize)>,
}

impl LabelMatrix {
    /// Builds a matrix from `(item, worker, class)` triples with 0-based classes.
    pub fn from_entries<I>(num_items: usize, num_workers: usize, num_classes: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, usize)>,
    {
        if num_classes < 2 {
            return Err(Error::InvalidConfig("at least two classes are required"));
        }
        let mut triples: Vec<(usize, usize, usize)> = entries.into_iter().collect();
        if triples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for &(item, worker, class) in &triples {
            if item >= num_items {
                return Err(Error::ShapeError { expected: num_items, found: item + 1, what: "item id" });
            }
            if worker >= num_workers {
                return Err(Error::ShapeError { expected: num_workers, found: worker + 1, what: "worker id" });
            }
            if class >= num_classes {
                return Err(Error::InvalidLabel { label: class as i64 + 1, num_classes });
            }
        }
        triples.sort_unstable();
        for pair in triples.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                return Err(Error::DuplicateLabel { item: pair[0].0, worker: pair[0].1 });
            }
        }
        let mut offsets = vec![0usize; num_items + 1];
        for &(item, _, _) in &triples {
            offsets[item + 1] += 1;
        }
        for i in 0..num_items {
            if offsets[i + 1] == 0 {
                return Err(Error::UnlabeledItem { item: i });
            }
            offsets[i + 1] += offsets[i];
        }
        let entries = triples.into_iter().map(|(_, w, c)| (w, c)).collect();
        Ok(Self { num_items, num_workers, num_classes, offsets, entries })
    }

    /// Builds a matrix from the dense item × worker layout with 1-based
    /// labels and `-1` for "not labeled".
    pub fn from_dense(rows: &[Vec<i64>], num_classes: usize) -> Result<Self> {
        let num_workers = rows.first().map_or(0, Vec::len);
        let mut triples = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != num_workers {
                return Err(Error::ShapeError { expected: num_workers, found: row.len(), what: "dense row" });
            }
            for (k, &l) in row.iter().enumerate() {
                if l == -1 {
                    continue;
                }
                if l < 1 || l as u64 > num_classes as u64 {
                    return Err(Error::InvalidLabel { label: l, num_classes });
                }
                triples.push((i, k, (l - 1) as usize));
            }
        }
        Self::from_entries(rows.len(), num_workers, num_classes, triples)
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_workers(&self) -> usize {
        self.num_workers
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_labels(&self) -> usize {
        self.entries.len()
    }

    /// `(worker, class)` pairs for one item, sorted by worker.
    pub fn item_labels(&self, item: usize) -> &[(usize, usize)] {
        &self.entries[self.offsets[item]..self.offsets[item + 1]]
    }

    /// All `(item, worker, class)` triples in item-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.num_items).flat_map(move |i| self.item_labels(i).iter().map(move |&(w, c)| (i, w, c)))
    }

    /// The label worker `worker` gave item `item`, if any.
    pub fn label(&self, item: usize, worker: usize) -> Option<usize> {
        let row = self.item_labels(item);
        row.binary_search_by_key(&worker, |&(w, _)| w).ok().map(|j| row[j].1)
    }

    /// Number of labels each worker contributed.
    pub fn worker_label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_workers];
        for &(w, _) in &self.entries {
            counts[w] += 1;
        }
        counts
    }

    /// Dense item × worker rows, 1-based with `-1` for missing.
    pub fn to_dense(&self) -> Vec<Vec<i64>> {
        (0..self.num_items)
            .map(|i| {
                let mut row = vec![-1i64; self.num_workers];
                for &(w, c) in self.item_labels(i) {
                    row[w] = c as i64 + 1;
                }
                row
            })
            .collect()
    }
}

/// Ground-truth labels for a subset of items.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GoldLabels {
    num_classes: usize,
    labels: Vec<Option<usize>>,
}

impl GoldLabels {
    /// `pairs` are `(item, class)` with 0-based classes.
    pub fn new<I>(num_items: usize, num_classes: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut labels = vec![None; num_items];
        for (item, class) in pairs {
            if item >= num_items {
                return Err(Error::ShapeError { expected: num_items, found: item + 1, what: "gold item id" });
            }
            if class >= num_classes {
                return Err(Error::InvalidLabel { label: class as i64 + 1, num_classes });
            }
            labels[item] = Some(class);
        }
        Ok(Self { num_classes, labels })
    }

    /// Gold labels covering every item.
    pub fn complete(num_classes: usize, labels: &[usize]) -> Result<Self> {
        Self::new(labels.len(), num_classes, labels.iter().copied().enumerate())
    }

    pub fn get(&self, item: usize) -> Option<usize> {
        self.labels.get(item).copied().flatten()
    }

    pub fn num_items(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.labels.iter().enumerate().filter_map(|(i, l)| l.map(|c| (i, c)))
    }

    pub fn len(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fixed class prior.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Prior(Vec<f64>);

impl Prior {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidConfig("prior needs at least two classes"));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidConfig("prior entries must lie in [0, 1]"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig("prior must sum to 1"));
        }
        Ok(Self(probs))
    }

    pub fn uniform(num_classes: usize) -> Self {
        Self(vec![1.0 / num_classes as f64; num_classes])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }
}

/// Class frequencies among all observed labels. The result stays fixed for
/// the whole training run.
pub fn estimate_prior(labels: &LabelMatrix) -> Prior {
    let mut counts = vec![0usize; labels.num_classes()];
    for (_, _, c) in labels.iter() {
        counts[c] += 1;
    }
    let total = labels.num_labels() as f64;
    Prior(counts.into_iter().map(|n| n as f64 / total).collect())
}

/// Width of the encoded instance: one one-hot block of `C` per worker.
pub fn input_dim(labels: &LabelMatrix) -> usize {
    labels.num_workers() * labels.num_classes()
}

/// Dense encoding of one item: block `k` is the one-hot of worker `k`'s
/// label, or all zeros if worker `k` did not label the item.
pub fn encode_instance(labels: &LabelMatrix, item: usize) -> Vec<f64> {
    let c = labels.num_classes();
    let mut x = vec![0.0; input_dim(labels)];
    for &(w, class) in labels.item_labels(item) {
        x[w * c + class] = 1.0;
    }
    x
}

/// Positions of the ones in [`encode_instance`], ascending.
pub fn active_inputs(labels: &LabelMatrix, item: usize) -> Vec<usize> {
    let c = labels.num_classes();
    labels.item_labels(item).iter().map(|&(w, class)| w * c + class).collect()
}

/// Inverse of [`encode_instance`]: per worker, the label in the block or `None`.
pub fn decode_instance(x: &[f64], num_workers: usize, num_classes: usize) -> Vec<Option<usize>> {
    (0..num_workers)
        .map(|k| {
            let block = &x[k * num_classes..(k + 1) * num_classes];
            block.iter().position(|&v| v == 1.0)
        })
        .collect()
}

/// How mini-batches are drawn within an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Sampling {
    /// A fresh permutation of all items, cut into chunks of `M`.
    #[default]
    Permutation,
    /// `ceil(N / M)` batches of `M` items drawn independently with replacement.
    WithReplacement,
}

/// The batches of one epoch. A batch size above `num_items` is clamped.
pub fn epoch_batches<R: Rng + ?Sized>(
    num_items: usize,
    batch_size: usize,
    sampling: Sampling,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if batch_size < 1 {
        return Err(Error::InvalidConfig("batch size must be at least 1"));
    }
    if num_items == 0 {
        return Ok(Vec::new());
    }
    let m = batch_size.min(num_items);
    match sampling {
        Sampling::Permutation => {
            let mut order: Vec<usize> = (0..num_items).collect();
            order.shuffle(rng);
            Ok(order.chunks(m).map(<[usize]>::to_vec).collect())
        }
        Sampling::WithReplacement => {
            let batches = num_items.div_ceil(m);
            Ok((0..batches).map(|_| (0..m).map(|_| rng.random_range(0..num_items)).collect()).collect())
        }
    }
}
