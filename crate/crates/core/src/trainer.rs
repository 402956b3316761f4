//! Joint training of the classifier and the guiding model, mu selection and
//! likelihood decoding.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{self, estimate_prior, LabelMatrix, Prior, Sampling};
use crate::error::{Error, Result};
use crate::guiding::{self, GuidingModel, McParams, WaParams};
use crate::math;
use crate::network::{Gradients, Input, NetworkParams};
use crate::optim::{RmsProp, RmsPropConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ModelKind {
    /// Worker-ability guiding model, binary tasks.
    NnWa,
    /// Per-worker confusion guiding model, any number of classes.
    NnMc,
}

/// How a trained model turns an instance into a single label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Decoder {
    /// `argmax_c log g(l | c)`.
    #[default]
    Mle,
    /// `argmax_c log g(l | c) + log prior(c)`.
    Map,
    /// `argmax_c q(c | l)`.
    Q,
}

/// Default mu grid, log-spaced over `[0.001, 2.0]`.
pub const DEFAULT_MU_GRID: [f64; 8] = [0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 2.0];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub model: ModelKind,
    /// Hidden width; `4 * C` when `None`.
    pub hidden_dim: Option<usize>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub optimizer: RmsPropConfig,
    /// Weight of the KL-to-prior term for a single run.
    pub mu: f64,
    /// Candidates for [`select_mu`].
    pub mu_grid: Vec<f64>,
    pub convergence_window: usize,
    pub convergence_tol: f64,
    pub sampling: Sampling,
    /// Scale of the Normal noise added to the initial confusion logits.
    pub omega_init_noise: f64,
    /// Relabel latent classes after training when workers look worse than
    /// random under the learned model.
    pub fix_label_switching: bool,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(model: ModelKind) -> Self {
        Self {
            model,
            hidden_dim: None,
            batch_size: 64,
            max_epochs: 500,
            optimizer: RmsPropConfig::default(),
            mu: 1.0,
            mu_grid: DEFAULT_MU_GRID.to_vec(),
            convergence_window: 5,
            convergence_tol: 1e-4,
            sampling: Sampling::Permutation,
            omega_init_noise: 0.0,
            fix_label_switching: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch size must be at least 1"));
        }
        if self.hidden_dim == Some(0) {
            return Err(Error::InvalidConfig("hidden width must be positive"));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidConfig("mu must be positive"));
        }
        if self.mu_grid.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidConfig("mu grid values must be positive"));
        }
        if self.convergence_window < 1 {
            return Err(Error::InvalidConfig("convergence window must be at least 1"));
        }
        if !(self.omega_init_noise >= 0.0) {
            return Err(Error::InvalidConfig("omega noise must be non-negative"));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Warning {
    /// Workers looked worse than random; latent class `c` was mapped to
    /// `permutation[c]` (applied only when `applied` is set).
    LabelSwitching { permutation: Vec<usize>, mean_reliability: f64, applied: bool },
    /// The mean loss of the last window is above the first-epoch loss.
    NoProgress { first: f64, last: f64 },
    /// A mu grid point failed and was skipped.
    GridPointFailed { mu: f64, numerical: bool },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub network: NetworkParams,
    pub guiding: GuidingModel,
    pub prior: Prior,
    pub mu: f64,
    /// Item-weighted mean batch loss per epoch.
    pub loss_history: Vec<f64>,
    pub converged: bool,
    pub num_items: usize,
    pub num_workers: usize,
    pub num_classes: usize,
    pub optimizer: RmsProp,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Predictions {
    pub num_classes: usize,
    /// Predicted class per item.
    pub labels: Vec<usize>,
    /// Per-item distribution, `N x C`: `q` for the trained model, vote shares
    /// or EM posteriors for the baselines.
    pub posterior: Vec<f64>,
    /// `log g(l_i | c)`, `N x C`; empty for the baselines.
    pub loglik: Vec<f64>,
}

impl Predictions {
    pub fn num_items(&self) -> usize {
        self.labels.len()
    }

    pub fn posterior_row(&self, item: usize) -> &[f64] {
        &self.posterior[item * self.num_classes..(item + 1) * self.num_classes]
    }

    pub fn loglik_row(&self, item: usize) -> Option<&[f64]> {
        if self.loglik.is_empty() {
            None
        } else {
            Some(&self.loglik[item * self.num_classes..(item + 1) * self.num_classes])
        }
    }

    /// `sum_i log g(l_i | t_i)` over the predicted labels.
    pub fn likelihood_criterion(&self) -> Option<f64> {
        if self.loglik.is_empty() {
            return None;
        }
        Some(self.labels.iter().enumerate().map(|(i, &t)| self.loglik[i * self.num_classes + t]).sum())
    }
}

fn initial_model(labels: &LabelMatrix, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    let (n, k, c) = (labels.num_items(), labels.num_workers(), labels.num_classes());
    if config.model == ModelKind::NnWa && c != 2 {
        return Err(Error::BinaryOnly { num_classes: c });
    }
    let hidden = config.hidden_dim.unwrap_or(4 * c);
    let network = NetworkParams::init(data::input_dim(labels), hidden, c, config.seed)?;
    let guiding = match config.model {
        ModelKind::NnWa => GuidingModel::WorkerAbility(WaParams::zeros(k)),
        ModelKind::NnMc if config.omega_init_noise > 0.0 => GuidingModel::Confusion(McParams::perturbed(
            k,
            c,
            config.omega_init_noise,
            config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15),
        )),
        ModelKind::NnMc => GuidingModel::Confusion(McParams::zeros(k, c)),
    };
    Ok(TrainedModel {
        kind: config.model,
        network,
        guiding,
        prior: estimate_prior(labels),
        mu: config.mu,
        loss_history: Vec::new(),
        converged: false,
        num_items: n,
        num_workers: k,
        num_classes: c,
        optimizer: RmsProp::new(config.optimizer)?,
        warnings: Vec::new(),
    })
}

/// Reusable buffers for one mini-batch step.
struct StepScratch {
    grads: Gradients,
    beta_grad: Vec<f64>,
    q: Vec<f64>,
    log_q: Vec<f64>,
    loglik: Vec<f64>,
}

/// Computes the batch loss and all gradients, leaving them in `scratch`.
fn batch_gradients(
    model: &TrainedModel,
    labels: &LabelMatrix,
    active: &[Vec<usize>],
    batch: &[usize],
    scratch: &mut StepScratch,
) -> Result<f64> {
    let c = model.num_classes;
    let prepared = model.guiding.prepare();
    scratch.grads.fill_zero();
    scratch.beta_grad.iter_mut().for_each(|g| *g = 0.0);
    for buf in [&mut scratch.q, &mut scratch.log_q, &mut scratch.loglik] {
        buf.clear();
        buf.resize(batch.len() * c, 0.0);
    }
    let mut traces = Vec::with_capacity(batch.len());
    for (row, &item) in batch.iter().enumerate() {
        let trace = model.network.forward(Input::OneHot(&active[item]))?;
        let span = row * c..(row + 1) * c;
        scratch.q[span.clone()].copy_from_slice(&trace.q);
        scratch.log_q[span.clone()].copy_from_slice(&trace.log_q);
        prepared.loglik_row(labels, item, &mut scratch.loglik[span]);
        traces.push(trace);
    }
    let loss = guiding::batch_loss_with_log_q(&scratch.q, &scratch.log_q, &scratch.loglik, &model.prior, model.mu)?;
    for (row, (&item, trace)) in batch.iter().zip(&traces).enumerate() {
        let span = row * c..(row + 1) * c;
        model.network.backward_into(trace, &loss.dl_dq[span.clone()], &mut scratch.grads);
        prepared.accumulate_grad(labels, item, &loss.dl_dloglik[span], &mut scratch.beta_grad);
    }
    Ok(loss.terms.value)
}

/// Loss and flattened gradient `[w1, b1, w2, b2, beta]` of one batch at the
/// model's current parameters.
pub fn loss_and_gradient(model: &TrainedModel, labels: &LabelMatrix, batch: &[usize]) -> Result<(f64, Vec<f64>)> {
    model.guiding.check_compatible(labels)?;
    let active: Vec<Vec<usize>> = (0..labels.num_items()).map(|i| data::active_inputs(labels, i)).collect();
    let mut scratch = StepScratch {
        grads: Gradients::zeros(&model.network),
        beta_grad: vec![0.0; model.guiding.params().len()],
        q: Vec::new(),
        log_q: Vec::new(),
        loglik: Vec::new(),
    };
    let value = batch_gradients(model, labels, &active, batch, &mut scratch)?;
    let mut flat: Vec<f64> = scratch.grads.groups().iter().flat_map(|g| g.iter().copied()).collect();
    flat.extend_from_slice(&scratch.beta_grad);
    Ok((value, flat))
}

fn has_converged(history: &[f64], window: usize, tol: f64) -> bool {
    if history.len() < 2 * window {
        return false;
    }
    let n = history.len();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let recent = mean(&history[n - window..]);
    let before = mean(&history[n - 2 * window..n - window]);
    (recent - before).abs() / before.abs().max(f64::MIN_POSITIVE) < tol
}

/// Trains classifier and guiding model together with RMSProp.
pub fn train(labels: &LabelMatrix, config: &TrainConfig) -> Result<TrainedModel> {
    let mut model = initial_model(labels, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let active: Vec<Vec<usize>> = (0..labels.num_items()).map(|i| data::active_inputs(labels, i)).collect();
    let mut scratch = StepScratch {
        grads: Gradients::zeros(&model.network),
        beta_grad: vec![0.0; model.guiding.params().len()],
        q: Vec::new(),
        log_q: Vec::new(),
        loglik: Vec::new(),
    };

    for epoch in 0..config.max_epochs {
        let batches = data::epoch_batches(labels.num_items(), config.batch_size, config.sampling, &mut rng)?;
        let mut total = 0.0;
        let mut seen = 0usize;
        for (b, batch) in batches.iter().enumerate() {
            let value = batch_gradients(&model, labels, &active, batch, &mut scratch)?;
            if !value.is_finite() {
                return Err(Error::NonFiniteGradient { epoch, batch: b });
            }
            let [w1, b1, w2, b2] = model.network.groups_mut();
            let mut params: [&mut [f64]; 5] = [w1, b1, w2, b2, model.guiding.params_mut()];
            let g = scratch.grads.groups();
            let grads: [&[f64]; 5] = [g[0], g[1], g[2], g[3], &scratch.beta_grad];
            model.optimizer.step(&mut params, &grads).map_err(|_| Error::NonFiniteGradient { epoch, batch: b })?;
            total += value * batch.len() as f64;
            seen += batch.len();
        }
        model.loss_history.push(total / seen as f64);
        if has_converged(&model.loss_history, config.convergence_window, config.convergence_tol) {
            model.converged = true;
            break;
        }
    }

    if let (Some(&first), true) = (model.loss_history.first(), model.loss_history.len() > 1) {
        let w = config.convergence_window.min(model.loss_history.len());
        let n = model.loss_history.len();
        let last = model.loss_history[n - w..].iter().sum::<f64>() / w as f64;
        if last > first {
            model.warnings.push(Warning::NoProgress { first, last });
        }
    }
    if !model.loss_history.is_empty() {
        check_label_switching(&mut model, config.fix_label_switching);
    }
    Ok(model)
}

/// Relabels latent classes when another assignment fits the
/// better-than-random-worker assumption better.
///
/// The classifier and guiding model are symmetric under class permutations
/// up to the fixed prior, so training can settle on any relabelling. The
/// identifying choice is the permutation that maximises the summed
/// probability of a correct report. A warning is recorded whenever that
/// permutation is not the identity or mean reliability is below chance.
fn check_label_switching(model: &mut TrainedModel, apply: bool) {
    let c = model.num_classes;
    let chance = match model.kind {
        ModelKind::NnWa => 0.5,
        ModelKind::NnMc => 1.0 / c as f64,
    };
    let mean_reliability = model.guiding.mean_reliability();
    let permutation = model.guiding.best_permutation();
    let identity = permutation.iter().enumerate().all(|(t, &j)| t == j);
    if identity && mean_reliability >= chance {
        return;
    }
    let applied = apply && !identity;
    if applied {
        model.guiding.permute_classes(&permutation);
        permute_outputs(&mut model.network, &permutation);
    }
    model.warnings.push(Warning::LabelSwitching { permutation, mean_reliability, applied });
}

/// Moves output unit `t` to position `perm[t]`.
fn permute_outputs(network: &mut NetworkParams, perm: &[usize]) {
    let h = network.hidden_dim;
    let (w2, b2) = (network.w2.clone(), network.b2.clone());
    for (t, &j) in perm.iter().enumerate() {
        network.w2[j * h..(j + 1) * h].copy_from_slice(&w2[t * h..(t + 1) * h]);
        network.b2[j] = b2[t];
    }
}

/// Decodes every item of `labels` with a trained model.
pub fn predict(model: &TrainedModel, labels: &LabelMatrix, decoder: Decoder) -> Result<Predictions> {
    model.guiding.check_compatible(labels)?;
    if model.network.input_dim != data::input_dim(labels) {
        return Err(Error::ShapeError {
            expected: model.network.input_dim,
            found: data::input_dim(labels),
            what: "network input width",
        });
    }
    let c = model.num_classes;
    let n = labels.num_items();
    let prepared = model.guiding.prepare();
    let log_prior: Vec<f64> = model.prior.probs().iter().map(|&p| libm::log(p)).collect();
    let mut out = Predictions {
        num_classes: c,
        labels: Vec::with_capacity(n),
        posterior: vec![0.0; n * c],
        loglik: vec![0.0; n * c],
    };
    let mut score = vec![0.0; c];
    for i in 0..n {
        let active = data::active_inputs(labels, i);
        let trace = model.network.forward(Input::OneHot(&active))?;
        let span = i * c..(i + 1) * c;
        out.posterior[span.clone()].copy_from_slice(&trace.q);
        prepared.loglik_row(labels, i, &mut out.loglik[span.clone()]);
        let ll = &out.loglik[span];
        let t = match decoder {
            Decoder::Mle => math::argmax(ll),
            Decoder::Map => {
                for j in 0..c {
                    score[j] = ll[j] + log_prior[j];
                }
                math::argmax(&score)
            }
            Decoder::Q => math::argmax(&trace.q),
        };
        out.labels.push(t);
    }
    Ok(out)
}

/// Outcome of one mu grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub mu: f64,
    /// `sum_i log g(l_i | t_i)` on the decoded labels, or the failure.
    pub criterion: core::result::Result<f64, Error>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuSelection {
    pub mu: f64,
    pub model: TrainedModel,
    pub predictions: Predictions,
    pub grid: Vec<GridPoint>,
    pub warnings: Vec<Warning>,
}

/// The per-grid-point configs: grid point `i` trains with `mu_grid[i]` and
/// seed `seed + i`.
pub fn grid_configs(config: &TrainConfig) -> Result<Vec<TrainConfig>> {
    config.validate()?;
    if config.mu_grid.is_empty() {
        return Err(Error::InvalidConfig("mu grid is empty"));
    }
    Ok(config
        .mu_grid
        .iter()
        .enumerate()
        .map(|(i, &mu)| TrainConfig { mu, seed: config.seed.wrapping_add(i as u64), ..config.clone() })
        .collect())
}

/// Trains and decodes one grid point.
pub fn run_grid_point(
    labels: &LabelMatrix,
    config: &TrainConfig,
    decoder: Decoder,
) -> Result<(TrainedModel, Predictions)> {
    let model = train(labels, config)?;
    let predictions = predict(&model, labels, decoder)?;
    Ok((model, predictions))
}

/// Picks the grid point with the largest likelihood criterion, breaking ties
/// toward the smaller mu. `results` must be in grid order.
pub fn pick_best(configs: &[TrainConfig], results: Vec<Result<(TrainedModel, Predictions)>>) -> Result<MuSelection> {
    let mut grid = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    let mut best: Option<(f64, f64, TrainedModel, Predictions)> = None;
    let mut last_err = None;
    for (cfg, result) in configs.iter().zip(results) {
        match result {
            Ok((model, predictions)) => {
                let crit = predictions.likelihood_criterion().unwrap_or(f64::NEG_INFINITY);
                grid.push(GridPoint { mu: cfg.mu, criterion: Ok(crit) });
                let better = match &best {
                    None => true,
                    Some((b_crit, b_mu, _, _)) => crit > *b_crit || (crit == *b_crit && cfg.mu < *b_mu),
                };
                if better {
                    best = Some((crit, cfg.mu, model, predictions));
                }
            }
            Err(e) => {
                warnings.push(Warning::GridPointFailed { mu: cfg.mu, numerical: e.is_numerical() });
                grid.push(GridPoint { mu: cfg.mu, criterion: Err(e.clone()) });
                last_err = Some(e);
            }
        }
    }
    match best {
        Some((_, mu, model, predictions)) => Ok(MuSelection { mu, model, predictions, grid, warnings }),
        None => Err(Error::AllGridPointsFailed(Box::new(last_err.unwrap_or(Error::InvalidConfig("mu grid is empty"))))),
    }
}

/// Trains one model per mu in the grid and keeps the one whose decoded
/// labels have the largest guiding likelihood.
pub fn select_mu(labels: &LabelMatrix, config: &TrainConfig, decoder: Decoder) -> Result<MuSelection> {
    let configs = grid_configs(config)?;
    let results = configs.iter().map(|cfg| run_grid_point(labels, cfg, decoder)).collect();
    pick_best(&configs, results)
}
