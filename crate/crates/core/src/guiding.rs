//! Guiding models `g(l | t)` and the consensus loss.
//!
//! Both models factor over the workers who labeled an item:
//!
//! - worker ability (binary only): worker `k` reports class `c` correctly
//!   with probability `sigmoid(lambda[c][k])`;
//! - confusion: worker `k` reports label `j` for a class-`c` item with
//!   probability `psi[c][k][j] = softmax(omega[c][k])[j]`.
//!
//! The prior `g(t)` is never trained. The batch loss is
//!
//! ```text
//! F = (1/M) sum_i [ mu * KL(q_i || prior) - sum_c q_ic * loglik_ic ]
//! ```

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{LabelMatrix, Prior};
use crate::error::{Error, Result};
use crate::math;

/// Worker-ability parameters, `lambda[c * K + k]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WaParams {
    pub num_workers: usize,
    pub lambda: Vec<f64>,
}

impl WaParams {
    /// All abilities zero: every worker starts as a coin flip.
    pub fn zeros(num_workers: usize) -> Self {
        Self { num_workers, lambda: vec![0.0; 2 * num_workers] }
    }

    pub fn get(&self, class: usize, worker: usize) -> f64 {
        self.lambda[class * self.num_workers + worker]
    }

    /// Probability that `worker` labels a `class` item correctly.
    pub fn accuracy(&self, class: usize, worker: usize) -> f64 {
        math::sigmoid(self.get(class, worker))
    }
}

/// Confusion parameters, `omega[(c * K + k) * C + j]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct McParams {
    pub num_workers: usize,
    pub num_classes: usize,
    pub omega: Vec<f64>,
}

impl McParams {
    pub fn zeros(num_workers: usize, num_classes: usize) -> Self {
        Self { num_workers, num_classes, omega: vec![0.0; num_classes * num_workers * num_classes] }
    }

    /// Zeros plus `scale * Normal(0, 1)` noise on every entry.
    pub fn perturbed(num_workers: usize, num_classes: usize, scale: f64, seed: u64) -> Self {
        let mut p = Self::zeros(num_workers, num_classes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in p.omega.iter_mut() {
            *w = scale * standard_normal(&mut rng);
        }
        p
    }

    pub fn row(&self, class: usize, worker: usize) -> &[f64] {
        let c = self.num_classes;
        let start = (class * self.num_workers + worker) * c;
        &self.omega[start..start + c]
    }
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    libm::sqrt(-2.0 * libm::log(1.0 - u)) * libm::cos(2.0 * core::f64::consts::PI * v)
}

/// All confusion rows `psi[c][k] = softmax(omega[c][k])`, same layout as
/// [`McParams::omega`].
#[derive(Debug, Clone, PartialEq)]
pub struct Psi {
    pub num_workers: usize,
    pub num_classes: usize,
    pub values: Vec<f64>,
}

impl Psi {
    pub fn row(&self, class: usize, worker: usize) -> &[f64] {
        let c = self.num_classes;
        let start = (class * self.num_workers + worker) * c;
        &self.values[start..start + c]
    }
}

pub fn mc_psi(params: &McParams) -> Psi {
    let mut values = vec![0.0; params.omega.len()];
    for (out, row) in values.chunks_mut(params.num_classes).zip(params.omega.chunks(params.num_classes)) {
        math::softmax_into(row, out);
    }
    Psi { num_workers: params.num_workers, num_classes: params.num_classes, values }
}

/// `log g(l_i | t_i = class)` under the worker-ability model.
pub fn wa_loglik(params: &WaParams, labels: &LabelMatrix, item: usize, class: usize) -> Result<f64> {
    if labels.num_classes() != 2 {
        return Err(Error::BinaryOnly { num_classes: labels.num_classes() });
    }
    Ok(labels
        .item_labels(item)
        .iter()
        .map(|&(k, l)| {
            let lambda = params.get(class, k);
            if l == class {
                math::log_sigmoid(lambda)
            } else {
                math::log_sigmoid(-lambda)
            }
        })
        .sum())
}

/// `log g(l_i | t_i = class) = sum_k log psi[class][k][l_ik]`.
pub fn mc_loglik(psi: &Psi, labels: &LabelMatrix, item: usize, class: usize) -> f64 {
    labels.item_labels(item).iter().map(|&(k, l)| libm::log(psi.row(class, k)[l])).sum()
}

/// A trainable guiding model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum GuidingModel {
    WorkerAbility(WaParams),
    Confusion(McParams),
}

/// Per-batch cache of log factors, so each `(class, worker, label)` factor
/// is computed once per parameter value.
#[derive(Debug, Clone)]
pub struct Prepared {
    num_workers: usize,
    num_classes: usize,
    kind: PreparedKind,
}

#[derive(Debug, Clone)]
enum PreparedKind {
    /// `(log sigmoid(lambda), log sigmoid(-lambda), sigmoid(lambda))` per `(c, k)`.
    Ability(Vec<(f64, f64, f64)>),
    /// `psi` and `log psi`.
    Confusion { psi: Vec<f64>, log_psi: Vec<f64> },
}

impl GuidingModel {
    pub fn num_workers(&self) -> usize {
        match self {
            GuidingModel::WorkerAbility(p) => p.num_workers,
            GuidingModel::Confusion(p) => p.num_workers,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            GuidingModel::WorkerAbility(_) => 2,
            GuidingModel::Confusion(p) => p.num_classes,
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            GuidingModel::WorkerAbility(p) => &p.lambda,
            GuidingModel::Confusion(p) => &p.omega,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            GuidingModel::WorkerAbility(p) => &mut p.lambda,
            GuidingModel::Confusion(p) => &mut p.omega,
        }
    }

    pub fn check_compatible(&self, labels: &LabelMatrix) -> Result<()> {
        if let GuidingModel::WorkerAbility(_) = self {
            if labels.num_classes() != 2 {
                return Err(Error::BinaryOnly { num_classes: labels.num_classes() });
            }
        }
        if self.num_classes() != labels.num_classes() {
            return Err(Error::ShapeError {
                expected: self.num_classes(),
                found: labels.num_classes(),
                what: "number of classes",
            });
        }
        if self.num_workers() != labels.num_workers() {
            return Err(Error::ShapeError {
                expected: self.num_workers(),
                found: labels.num_workers(),
                what: "number of workers",
            });
        }
        Ok(())
    }

    pub fn prepare(&self) -> Prepared {
        let kind = match self {
            GuidingModel::WorkerAbility(p) => PreparedKind::Ability(
                p.lambda.iter().map(|&l| (math::log_sigmoid(l), math::log_sigmoid(-l), math::sigmoid(l))).collect(),
            ),
            GuidingModel::Confusion(p) => {
                let psi = mc_psi(p).values;
                let mut log_psi = vec![0.0; psi.len()];
                for (out, row) in log_psi.chunks_mut(p.num_classes).zip(p.omega.chunks(p.num_classes)) {
                    math::log_softmax_into(row, out);
                }
                PreparedKind::Confusion { psi, log_psi }
            }
        };
        Prepared { num_workers: self.num_workers(), num_classes: self.num_classes(), kind }
    }

    /// `log g(l_i | c)` for every class.
    pub fn loglik_row(&self, labels: &LabelMatrix, item: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_classes()];
        self.prepare().loglik_row(labels, item, &mut out);
        out
    }

    /// Per-(class, worker) correctness probability: `sigmoid(lambda)` or the
    /// diagonal entry of `psi`.
    pub fn reliability(&self, class: usize, worker: usize) -> f64 {
        match self {
            GuidingModel::WorkerAbility(p) => p.accuracy(class, worker),
            GuidingModel::Confusion(p) => {
                let mut row = vec![0.0; p.num_classes];
                math::softmax_into(p.row(class, worker), &mut row);
                row[class]
            }
        }
    }

    /// Mean of [`Self::reliability`] over all `(class, worker)` pairs.
    pub fn mean_reliability(&self) -> f64 {
        let (c, k) = (self.num_classes(), self.num_workers());
        let total: f64 = (0..c).flat_map(|t| (0..k).map(move |w| (t, w))).map(|(t, w)| self.reliability(t, w)).sum();
        total / (c * k) as f64
    }

    /// Probability that a worker reports `reported` for a `class` item.
    pub fn report_probability(&self, class: usize, worker: usize, reported: usize) -> f64 {
        match self {
            GuidingModel::WorkerAbility(p) => {
                let a = p.accuracy(class, worker);
                if reported == class {
                    a
                } else {
                    1.0 - a
                }
            }
            GuidingModel::Confusion(p) => {
                let mut row = vec![0.0; p.num_classes];
                math::softmax_into(p.row(class, worker), &mut row);
                row[reported]
            }
        }
    }

    /// The assignment `latent class -> reported label` maximising
    /// `sum_c sum_k P(report perm[c] | class c)`. Exhaustive for up to eight
    /// classes, greedy beyond.
    pub fn best_permutation(&self) -> Vec<usize> {
        let (c, k) = (self.num_classes(), self.num_workers());
        let mut score = vec![0.0; c * c];
        for t in 0..c {
            for j in 0..c {
                score[t * c + j] = (0..k).map(|w| self.report_probability(t, w, j)).sum();
            }
        }
        let total = |perm: &[usize]| -> f64 { perm.iter().enumerate().map(|(t, &j)| score[t * c + j]).sum() };
        if c <= 8 {
            let mut perm: Vec<usize> = (0..c).collect();
            let mut best = perm.clone();
            let mut best_score = total(&perm);
            // Heap's algorithm, iterative
            let mut stack = vec![0usize; c];
            let mut i = 0;
            while i < c {
                if stack[i] < i {
                    if i % 2 == 0 {
                        perm.swap(0, i);
                    } else {
                        perm.swap(stack[i], i);
                    }
                    let s = total(&perm);
                    if s > best_score {
                        best_score = s;
                        best = perm.clone();
                    }
                    stack[i] += 1;
                    i = 0;
                } else {
                    stack[i] = 0;
                    i += 1;
                }
            }
            best
        } else {
            let mut used = vec![false; c];
            (0..c)
                .map(|t| {
                    let j = (0..c)
                        .filter(|&j| !used[j])
                        .max_by(|&a, &b| score[t * c + a].total_cmp(&score[t * c + b]).then(b.cmp(&a)))
                        .unwrap();
                    used[j] = true;
                    j
                })
                .collect()
        }
    }

    /// Relabels latent classes so that latent class `c` becomes class `perm[c]`.
    pub fn permute_classes(&mut self, perm: &[usize]) {
        match self {
            GuidingModel::WorkerAbility(p) => {
                // With two classes, P(report j | latent t) for j != t is
                // sigmoid(-lambda_t), so a swap also flips the sign.
                let k = p.num_workers;
                let old = p.lambda.clone();
                for (t, &j) in perm.iter().enumerate() {
                    let sign = if j == t { 1.0 } else { -1.0 };
                    for w in 0..k {
                        p.lambda[j * k + w] = sign * old[t * k + w];
                    }
                }
            }
            GuidingModel::Confusion(p) => {
                let (k, c) = (p.num_workers, p.num_classes);
                let old = p.omega.clone();
                for (t, &j) in perm.iter().enumerate() {
                    let dst = j * k * c;
                    let src = t * k * c;
                    p.omega[dst..dst + k * c].copy_from_slice(&old[src..src + k * c]);
                }
            }
        }
    }
}

impl Prepared {
    pub fn loglik_row(&self, labels: &LabelMatrix, item: usize, out: &mut [f64]) {
        let (k_all, c_all) = (self.num_workers, self.num_classes);
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(k, l) in labels.item_labels(item) {
            for (c, o) in out.iter_mut().enumerate() {
                *o += match &self.kind {
                    PreparedKind::Ability(f) => {
                        let (pos, neg, _) = f[c * k_all + k];
                        if l == c {
                            pos
                        } else {
                            neg
                        }
                    }
                    PreparedKind::Confusion { log_psi, .. } => log_psi[(c * k_all + k) * c_all + l],
                };
            }
        }
    }

    /// Adds `sum_c dL/dloglik_ic * dloglik_ic/dbeta` into `grad`.
    pub fn accumulate_grad(&self, labels: &LabelMatrix, item: usize, dl_dloglik: &[f64], grad: &mut [f64]) {
        let (k_all, c_all) = (self.num_workers, self.num_classes);
        for &(k, l) in labels.item_labels(item) {
            for (c, &up) in dl_dloglik.iter().enumerate() {
                match &self.kind {
                    PreparedKind::Ability(f) => {
                        let s = f[c * k_all + k].2;
                        // d log sigmoid(x)/dx = 1 - sigmoid(x); d log sigmoid(-x)/dx = -sigmoid(x)
                        let d = if l == c { 1.0 - s } else { -s };
                        grad[c * k_all + k] += up * d;
                    }
                    PreparedKind::Confusion { psi, .. } => {
                        let base = (c * k_all + k) * c_all;
                        for j in 0..c_all {
                            let d = if j == l { 1.0 } else { 0.0 } - psi[base + j];
                            grad[base + j] += up * d;
                        }
                    }
                }
            }
        }
    }
}

/// Per-item pieces and the batch value of the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerms {
    /// `KL(q_i || prior)` per item.
    pub kl: Vec<f64>,
    /// `sum_c q_ic * loglik_ic` per item.
    pub expected_loglik: Vec<f64>,
    pub value: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub terms: LossTerms,
    /// `dF/dq`, `M x C`.
    pub dl_dq: Vec<f64>,
    /// `dF/dloglik`, `M x C`; chain with [`Prepared::accumulate_grad`].
    pub dl_dloglik: Vec<f64>,
}

/// Batch loss from classifier outputs `q` and guiding log-likelihoods, both
/// `M x C` row-major.
///
/// Entries with `q_ic = 0` contribute nothing to the loss, and the `log q`
/// part of their `dF/dq` is dropped: it only ever reaches the logits through
/// the softmax Jacobian, which multiplies it by `q_ic = 0`.
pub fn batch_loss(q: &[f64], logliks: &[f64], prior: &Prior, mu: f64) -> Result<BatchLoss> {
    let log_q: Vec<f64> = q.iter().map(|&v| if v > 0.0 { libm::log(v) } else { 0.0 }).collect();
    batch_loss_with_log_q(q, &log_q, logliks, prior, mu)
}

/// [`batch_loss`] with `log q` supplied, e.g. from a log-softmax.
pub fn batch_loss_with_log_q(q: &[f64], log_q: &[f64], logliks: &[f64], prior: &Prior, mu: f64) -> Result<BatchLoss> {
    let c = prior.num_classes();
    if !q.len().is_multiple_of(c) || q.is_empty() {
        return Err(Error::ShapeError { expected: c, found: q.len(), what: "q rows" });
    }
    for (len, what) in [(log_q.len(), "log q"), (logliks.len(), "log-likelihoods")] {
        if len != q.len() {
            return Err(Error::ShapeError { expected: q.len(), found: len, what });
        }
    }
    let m = q.len() / c;
    let inv_m = 1.0 / m as f64;
    let log_p: Vec<f64> = prior.probs().iter().map(|&p| libm::log(p)).collect();

    let mut kl = Vec::with_capacity(m);
    let mut expected = Vec::with_capacity(m);
    let mut dl_dq = vec![0.0; q.len()];
    let mut dl_dloglik = vec![0.0; q.len()];
    for i in 0..m {
        let row = i * c..(i + 1) * c;
        let (qi, lqi, li) = (&q[row.clone()], &log_q[row.clone()], &logliks[row.clone()]);
        let mut kl_i = 0.0;
        let mut e_i = 0.0;
        for j in 0..c {
            if qi[j] > 0.0 {
                if prior.probs()[j] == 0.0 {
                    return Err(Error::DegeneratePrior { class: j });
                }
                kl_i += qi[j] * (lqi[j] - log_p[j]);
                e_i += qi[j] * li[j];
                dl_dq[i * c + j] = inv_m * (mu * (lqi[j] - log_p[j] + 1.0) - li[j]);
            } else if prior.probs()[j] > 0.0 {
                dl_dq[i * c + j] = inv_m * (mu * (1.0 - log_p[j]) - li[j]);
            }
            dl_dloglik[i * c + j] = -inv_m * qi[j];
        }
        kl.push(kl_i);
        expected.push(e_i);
    }
    let value = inv_m * kl.iter().zip(&expected).map(|(k, e)| mu * k - e).sum::<f64>();
    Ok(BatchLoss { terms: LossTerms { kl, expected_loglik: expected, value, mu }, dl_dq, dl_dloglik })
}

/// `KL(a || b)` with `0 log 0 = 0`.
pub fn kl_divergence(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).filter(|(x, _)| **x > 0.0).map(|(&x, &y)| x * (libm::log(x) - libm::log(y))).sum()
}

/// Guiding-model posterior `g(c | l) ∝ g(l | c) g(c)`.
pub fn posterior(loglik_row: &[f64], prior: &Prior) -> Vec<f64> {
    let joint: Vec<f64> = loglik_row.iter().zip(prior.probs()).map(|(l, p)| l + libm::log(*p)).collect();
    let mut out = vec![0.0; joint.len()];
    math::softmax_into(&joint, &mut out);
    out
}

/// `log g(l) = log sum_c g(l | c) g(c)`.
pub fn log_evidence(loglik_row: &[f64], prior: &Prior) -> f64 {
    let joint: Vec<f64> = loglik_row.iter().zip(prior.probs()).map(|(l, p)| l + libm::log(*p)).collect();
    math::log_sum_exp(&joint)
}

/// `sum_c q_c (log g(l, c) - log q_c)`.
pub fn elbo(q: &[f64], loglik_row: &[f64], prior: &Prior) -> f64 {
    q.iter()
        .zip(loglik_row)
        .zip(prior.probs())
        .filter(|((qc, _), _)| **qc > 0.0)
        .map(|((&qc, &l), &p)| qc * (libm::log(p) + l - libm::log(qc)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[&[i64]], c: usize) -> LabelMatrix {
        LabelMatrix::from_dense(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), c).unwrap()
    }

    #[test]
    fn wa_loglik_examples() {
        let m = dense(&[&[1, 2, 1]], 2);
        let p = WaParams::zeros(3);
        let v = wa_loglik(&p, &m, 0, 0).unwrap();
        assert_eq!(v, 3.0 * 0.5f64.ln());

        let m = dense(&[&[2]], 2);
        let mut p = WaParams::zeros(1);
        p.lambda[1] = 3.0f64.ln();
        assert!((wa_loglik(&p, &m, 0, 1).unwrap() - 0.75f64.ln()).abs() < 1e-15);

        p.lambda[1] = -50.0;
        let v = wa_loglik(&p, &m, 0, 1).unwrap();
        let oracle = -(1.0f64 + 50.0f64.exp()).ln();
        assert!((v - oracle).abs() < 1e-12 && v.is_finite());

        let m3 = dense(&[&[1]], 3);
        assert_eq!(wa_loglik(&WaParams::zeros(1), &m3, 0, 0), Err(Error::BinaryOnly { num_classes: 3 }));
    }

    #[test]
    fn wa_loglik_approaches_zero_from_below() {
        let m = dense(&[&[1, 1]], 2);
        let mut p = WaParams::zeros(2);
        let mut prev = f64::NEG_INFINITY;
        for lam in [1.0, 5.0, 10.0, 20.0, 40.0] {
            p.lambda[0] = lam;
            p.lambda[1] = lam;
            let v = wa_loglik(&p, &m, 0, 0).unwrap();
            assert!(v < 0.0 && v > prev);
            prev = v;
        }
        assert!(prev > -1e-16);
    }

    #[test]
    fn psi_examples() {
        let p = McParams::zeros(1, 4);
        assert!(mc_psi(&p).values.iter().all(|&v| (v - 0.25).abs() < 1e-16));

        let mut p = McParams::zeros(1, 2);
        p.omega[0] = 2.0f64.ln();
        let psi = mc_psi(&p);
        assert!((psi.row(0, 0)[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((psi.row(0, 0)[1] - 1.0 / 3.0).abs() < 1e-15);

        let mut q = McParams::perturbed(3, 3, 1.0, 4);
        let before = mc_psi(&q);
        q.omega.iter_mut().for_each(|w| *w += 7.0);
        let after = mc_psi(&q);
        for (a, b) in before.values.iter().zip(&after.values) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn mc_loglik_examples() {
        let m = dense(&[&[1, 3, -1, 2]], 3);
        let psi = mc_psi(&McParams::zeros(4, 3));
        assert!((mc_loglik(&psi, &m, 0, 2) - 3.0 * (1.0f64 / 3.0).ln()).abs() < 1e-14);

        let m = dense(&[&[1]], 2);
        let mut p = McParams::zeros(1, 2);
        p.omega[0] = 9.0f64.ln(); // psi_1 = (0.9, 0.1)
        let psi = mc_psi(&p);
        assert!((mc_loglik(&psi, &m, 0, 0) - 0.9f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn mc_likelihood_marginalises_over_label_tuples() {
        // summing g(l | c) over all C^3 label tuples of three workers gives 1
        let psi = mc_psi(&McParams::perturbed(3, 3, 1.5, 8));
        for class in 0..3 {
            let mut total = 0.0;
            for a in 1..=3 {
                for b in 1..=3 {
                    for d in 1..=3 {
                        let m = dense(&[&[a, b, d]], 3);
                        total += mc_loglik(&psi, &m, 0, class).exp();
                    }
                }
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mc_loglik_ignores_worker_order() {
        let psi = mc_psi(&McParams::perturbed(3, 3, 1.0, 2));
        let m = dense(&[&[1, 3, 2]], 3);
        let direct = mc_loglik(&psi, &m, 0, 1);
        let reversed: f64 = m.item_labels(0).iter().rev().map(|&(k, l)| psi.row(1, k)[l].ln()).sum();
        assert!((direct - reversed).abs() < 1e-14);
    }

    #[test]
    fn prepared_matches_direct() {
        let m = dense(&[&[1, 2, -1], &[2, -1, 2]], 2);
        let wa = WaParams { num_workers: 3, lambda: vec![0.3, -1.0, 2.0, 0.1, 0.7, -0.4] };
        let g = GuidingModel::WorkerAbility(wa.clone());
        for i in 0..2 {
            let row = g.loglik_row(&m, i);
            for c in 0..2 {
                assert!((row[c] - wa_loglik(&wa, &m, i, c).unwrap()).abs() < 1e-15);
            }
        }
        let mc = McParams::perturbed(3, 2, 1.0, 1);
        let psi = mc_psi(&mc);
        let g = GuidingModel::Confusion(mc);
        for i in 0..2 {
            let row = g.loglik_row(&m, i);
            for c in 0..2 {
                assert!((row[c] - mc_loglik(&psi, &m, i, c)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn loss_examples() {
        let prior = Prior::new(vec![0.5, 0.5]).unwrap();
        let l = batch_loss(&[1.0, 0.0], &[-1.0, -9.0], &prior, 1.0).unwrap();
        assert!((l.terms.value - (1.0 + 2.0f64.ln())).abs() < 1e-15);

        let prior = Prior::new(vec![0.2, 0.3, 0.5]).unwrap();
        let q = [0.2, 0.3, 0.5, 0.2, 0.3, 0.5];
        for mu in [0.001, 1.0, 2.0] {
            let l = batch_loss(&q, &[0.0; 6], &prior, mu).unwrap();
            assert!(l.terms.value.abs() < 1e-15);
        }

        let prior = Prior::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(batch_loss(&[0.9, 0.1], &[0.0, 0.0], &prior, 1.0).unwrap_err(), Error::DegeneratePrior { class: 1 });
        assert!(batch_loss(&[1.0, 0.0], &[0.0, 0.0], &prior, 1.0).is_ok());
    }

    #[test]
    fn loss_gradient_wrt_q_matches_differences() {
        let prior = Prior::new(vec![0.3, 0.7]).unwrap();
        let q = [0.4, 0.6, 0.9, 0.1];
        let ll = [-1.0, -2.5, -0.3, -4.0];
        let base = batch_loss(&q, &ll, &prior, 0.7).unwrap();
        let h = 1e-6;
        for j in 0..4 {
            let mut qp = q;
            qp[j] += h;
            let mut qm = q;
            qm[j] -= h;
            let fd = (batch_loss(&qp, &ll, &prior, 0.7).unwrap().terms.value
                - batch_loss(&qm, &ll, &prior, 0.7).unwrap().terms.value)
                / (2.0 * h);
            assert!((fd - base.dl_dq[j]).abs() < 1e-7);
            let mut lp = ll;
            lp[j] += h;
            let mut lm = ll;
            lm[j] -= h;
            let fd = (batch_loss(&q, &lp, &prior, 0.7).unwrap().terms.value
                - batch_loss(&q, &lm, &prior, 0.7).unwrap().terms.value)
                / (2.0 * h);
            assert!((fd - base.dl_dloglik[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn permutation_search() {
        // every worker reports the opposite class: best relabelling swaps
        let wa = WaParams { num_workers: 2, lambda: vec![-2.0, -1.5, -1.0, -3.0] };
        let g = GuidingModel::WorkerAbility(wa);
        assert_eq!(g.best_permutation(), vec![1, 0]);
        assert!(g.mean_reliability() < 0.5);
        let before: Vec<f64> = (0..2).map(|k| g.report_probability(0, k, 1)).collect();
        let mut swapped = g.clone();
        swapped.permute_classes(&[1, 0]);
        for k in 0..2 {
            assert!((swapped.report_probability(1, k, 1) - before[k]).abs() < 1e-15);
        }
        assert!(swapped.mean_reliability() > 0.5);

        // confusion model whose latent class t reports (t + 1) mod 3
        let mut mc = McParams::zeros(2, 3);
        for t in 0..3 {
            for k in 0..2 {
                let start = (t * 2 + k) * 3;
                mc.omega[start + (t + 1) % 3] = 4.0;
            }
        }
        let mut g = GuidingModel::Confusion(mc);
        let perm = g.best_permutation();
        assert_eq!(perm, vec![1, 2, 0]);
        g.permute_classes(&perm);
        assert!(g.mean_reliability() > 0.9);
        assert_eq!(g.best_permutation(), vec![0, 1, 2]);
    }

    #[test]
    fn elbo_identity_single_case() {
        let prior = Prior::new(vec![0.25, 0.75]).unwrap();
        let ll = [-2.0, -0.5];
        let q = [0.6, 0.4];
        let post = posterior(&ll, &prior);
        let lhs = kl_divergence(&q, &post) + elbo(&q, &ll, &prior);
        assert!((lhs - log_evidence(&ll, &prior)).abs() < 1e-14);
    }
}
