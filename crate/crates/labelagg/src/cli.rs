//! Command-line interface.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use labelagg_core::baselines::{self, EmConfig};
use labelagg_core::data::Sampling;
use labelagg_core::eval;
use labelagg_core::synth::{self, LabelsPerItem, SynthConfig, WorkerModel};
use labelagg_core::trainer::{self, Decoder, ModelKind, Predictions, TrainConfig, TrainedModel, Warning};
use labelagg_core::GoldLabels;
use serde::Deserialize;

use crate::config::FileConfig;
use crate::error::{Error, Result};
use crate::io::{self, Dataset};
use crate::{checkpoint, report};

#[derive(Debug, Parser)]
#[command(name = "labelagg", version, about = "Aggregate noisy crowd labels without supervision")]
pub struct Cli {
    /// TOML file supplying defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model with one mu and write predicted labels.
    Aggregate(AggregateArgs),
    /// Train one model per mu and keep the most likely one.
    SelectMu(SelectMuArgs),
    /// Majority voting or Dawid & Skene EM.
    Baseline(BaselineArgs),
    /// Error rate of a prediction file against gold labels.
    Evaluate(EvaluateArgs),
    /// Predicted vs gold-based worker accuracy for a checkpoint.
    ReportWorkers(ReportArgs),
    /// Generate a synthetic dataset with planted workers.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    NnWa,
    NnMc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeArg {
    Mle,
    Map,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingArg {
    Permutation,
    WithReplacement,
}

#[derive(Debug, Clone, Default, PartialEq, Args)]
pub struct DataArgs {
    /// Label file (`item<TAB>worker<TAB>label`).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Gold file (`item<TAB>label`).
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Number of classes C.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Read the label file as a dense item x worker matrix with -1 for missing.
    #[arg(long)]
    pub dense: bool,
}

impl DataArgs {
    pub fn load(&self) -> Result<(Dataset, Option<GoldLabels>)> {
        let path = self.labels.as_deref().ok_or_else(|| Error::Usage("--labels is required".into()))?;
        let classes = self.classes.ok_or_else(|| Error::Usage("--classes is required".into()))?;
        let dataset = io::load_labels(path, classes, self.dense)?;
        let gold = self.gold.as_deref().map(|g| io::load_gold(g, &dataset)).transpose()?;
        Ok((dataset, gold))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// KL-to-prior weight for a single run [default: 1.0].
    #[arg(long)]
    pub mu: Option<f64>,
    /// Comma-separated mu candidates [default: 0.001,0.005,0.01,0.05,0.1,0.5,1,2].
    #[arg(long, value_delimiter = ',')]
    pub mu_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum epochs [default: 500].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size [default: 64].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Hidden width [default: 4 * classes].
    #[arg(long)]
    pub hidden: Option<usize>,
    /// RMSProp learning rate [default: 0.01].
    #[arg(long)]
    pub lr: Option<f64>,
    /// RMSProp decay [default: 0.9].
    #[arg(long)]
    pub rho: Option<f64>,
    /// RMSProp stabiliser [default: 1e-8].
    #[arg(long)]
    pub eps: Option<f64>,
    /// Convergence window in epochs [default: 5].
    #[arg(long)]
    pub window: Option<usize>,
    /// Relative loss change that counts as converged [default: 1e-4].
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, value_enum)]
    pub sampling: Option<SamplingArg>,
    /// Normal noise scale on the initial confusion logits [default: 0].
    #[arg(long)]
    pub omega_noise: Option<f64>,
    /// Decoder for the final labels [default: mle].
    #[arg(long, value_enum)]
    pub decode: Option<DecodeArg>,
    /// Keep the learned class orientation even if workers look adversarial.
    #[arg(long)]
    pub no_relabel: bool,
}

impl TrainArgs {
    pub(crate) fn fill_from(&mut self, other: TrainArgs) {
        macro_rules! fill {
            ($($f:ident),*) => { $( if self.$f.is_none() { self.$f = other.$f; } )* };
        }
        fill!(
            model,
            mu,
            mu_grid,
            seed,
            epochs,
            batch_size,
            hidden,
            lr,
            rho,
            eps,
            window,
            tol,
            sampling,
            omega_noise,
            decode
        );
        self.no_relabel |= other.no_relabel;
    }

    pub fn to_config(&self) -> Result<(TrainConfig, Decoder)> {
        let model = match self.model.ok_or_else(|| Error::Usage("--model is required".into()))? {
            ModelArg::NnWa => ModelKind::NnWa,
            ModelArg::NnMc => ModelKind::NnMc,
        };
        let mut cfg = TrainConfig::new(model);
        if let Some(v) = self.mu {
            cfg.mu = v;
        }
        if let Some(v) = &self.mu_grid {
            cfg.mu_grid = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        cfg.hidden_dim = self.hidden.or(cfg.hidden_dim);
        if let Some(v) = self.lr {
            cfg.optimizer.learning_rate = v;
        }
        if let Some(v) = self.rho {
            cfg.optimizer.rho = v;
        }
        if let Some(v) = self.eps {
            cfg.optimizer.eps = v;
        }
        if let Some(v) = self.window {
            cfg.convergence_window = v;
        }
        if let Some(v) = self.tol {
            cfg.convergence_tol = v;
        }
        if let Some(v) = self.sampling {
            cfg.sampling = match v {
                SamplingArg::Permutation => Sampling::Permutation,
                SamplingArg::WithReplacement => Sampling::WithReplacement,
            };
        }
        if let Some(v) = self.omega_noise {
            cfg.omega_init_noise = v;
        }
        cfg.fix_label_switching = !self.no_relabel;
        cfg.validate()?;
        let decoder = match self.decode.unwrap_or(DecodeArg::Mle) {
            DecodeArg::Mle => Decoder::Mle,
            DecodeArg::Map => Decoder::Map,
            DecodeArg::Q => Decoder::Q,
        };
        Ok((cfg, decoder))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args)]
pub struct OutputArgs {
    /// Predictions file (`item<TAB>label`); stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-class posterior file.
    #[arg(long)]
    pub posterior: Option<PathBuf>,
    /// Model checkpoint file.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Trained guiding parameters report.
    #[arg(long)]
    pub beta: Option<PathBuf>,
    /// JSON run summary.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SelectMuArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Grid points trained in parallel.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineMethod {
    Mv,
    DawidSkene,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub method: BaselineMethod,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub posterior: Option<PathBuf>,
    /// EM iteration cap.
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// EM stops when no posterior moves by this much.
    #[arg(long, default_value_t = 1e-6)]
    pub em_tol: f64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predictions file (`item<TAB>label`).
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub classes: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Worker report; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full psi rows (confusion model only).
    #[arg(long)]
    pub psi_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Ability,
    Confusion,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthKind::Ability)]
    pub kind: SynthKind,
    #[arg(long)]
    pub items: usize,
    #[arg(long)]
    pub workers: usize,
    #[arg(long)]
    pub classes: usize,
    #[arg(long, default_value_t = 5)]
    pub labels_per_item: usize,
    /// Lower bound of planted accuracies (or confusion diagonals).
    #[arg(long, default_value_t = 0.55)]
    pub acc_min: f64,
    #[arg(long, default_value_t = 0.9)]
    pub acc_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Label file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Gold file to write.
    #[arg(long)]
    pub gold_out: PathBuf,
    /// Planted worker parameters (`worker<TAB>class<TAB>p_1 ... p_C`).
    #[arg(long)]
    pub planted_out: Option<PathBuf>,
}

fn emit(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => io::write(p, text),
        None => stdout.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn warn(warnings: &[Warning]) {
    for w in warnings {
        match w {
            Warning::LabelSwitching { permutation, mean_reliability, applied } => eprintln!(
                "warning: class orientation ambiguous (mean reliability {mean_reliability:.3}); best permutation {:?}{}",
                permutation.iter().map(|c| c + 1).collect::<Vec<_>>(),
                if *applied { " applied" } else { " not applied" }
            ),
            Warning::NoProgress { first, last } => {
                eprintln!("warning: loss did not decrease (first epoch {first:.6}, final window {last:.6})")
            }
            Warning::GridPointFailed { mu, numerical } => eprintln!(
                "warning: mu = {mu} failed ({})",
                if *numerical { "numerical" } else { "input" }
            ),
        }
    }
}

fn write_outputs(
    output: &OutputArgs,
    dataset: &Dataset,
    model: &TrainedModel,
    predictions: &Predictions,
    gold: Option<&GoldLabels>,
    stdout: &mut dyn Write,
) -> Result<()> {
    let error_rate = gold.map(|g| eval::prediction_error_rate(predictions, g)).transpose()?;
    emit(output.out.as_deref(), &io::format_predictions(dataset, predictions), stdout)?;
    if let Some(p) = &output.posterior {
        io::write(p, &io::format_posteriors(dataset, predictions))?;
    }
    if let Some(p) = &output.checkpoint {
        checkpoint::save(p, model)?;
    }
    if let Some(p) = &output.beta {
        io::write(p, &report::format_beta(model, dataset))?;
    }
    if let Some(p) = &output.summary {
        io::write(p, &report::Summary::new(model, error_rate).to_json())?;
    }
    warn(&model.warnings);
    if let Some(e) = error_rate {
        eprintln!("error rate: {:.4}", e);
    }
    Ok(())
}

fn load_with_config(config: Option<&Path>, data: &mut DataArgs, train: &mut TrainArgs) -> Result<()> {
    if let Some(path) = config {
        FileConfig::load(path)?.apply(data, train);
    }
    Ok(())
}

/// Trains every grid point, `threads` at a time, and picks the winner.
pub fn select_mu_parallel(
    dataset: &Dataset,
    cfg: &TrainConfig,
    decoder: Decoder,
    threads: usize,
) -> Result<trainer::MuSelection> {
    let configs = trainer::grid_configs(cfg)?;
    let mut results = Vec::with_capacity(configs.len());
    for chunk in configs.chunks(threads.max(1)) {
        let chunk_results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> =
                chunk.iter().map(|c| s.spawn(move || trainer::run_grid_point(&dataset.labels, c, decoder))).collect();
            handles.into_iter().map(|h| h.join().expect("grid worker panicked")).collect()
        });
        results.extend(chunk_results);
    }
    Ok(trainer::pick_best(&configs, results)?)
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Aggregate(mut args) => {
            load_with_config(config, &mut args.data, &mut args.train)?;
            let (dataset, gold) = args.data.load()?;
            let (cfg, decoder) = args.train.to_config()?;
            let model = trainer::train(&dataset.labels, &cfg)?;
            let predictions = trainer::predict(&model, &dataset.labels, decoder)?;
            write_outputs(&args.output, &dataset, &model, &predictions, gold.as_ref(), stdout)
        }
        Command::SelectMu(mut args) => {
            load_with_config(config, &mut args.data, &mut args.train)?;
            let (dataset, gold) = args.data.load()?;
            let (cfg, decoder) = args.train.to_config()?;
            let sel = select_mu_parallel(&dataset, &cfg, decoder, args.threads)?;
            for point in &sel.grid {
                match &point.criterion {
                    Ok(c) => eprintln!("mu {}\tlog-likelihood {c:.6}", point.mu),
                    Err(e) => eprintln!("mu {}\tfailed: {e}", point.mu),
                }
            }
            eprintln!("selected mu: {}", sel.mu);
            warn(&sel.warnings);
            write_outputs(&args.output, &dataset, &sel.model, &sel.predictions, gold.as_ref(), stdout)
        }
        Command::Baseline(mut args) => {
            load_with_config(config, &mut args.data, &mut TrainArgs::default())?;
            let (dataset, gold) = args.data.load()?;
            let predictions = match args.method {
                BaselineMethod::Mv => baselines::majority_vote(&dataset.labels),
                BaselineMethod::DawidSkene => {
                    let em = EmConfig { max_iters: args.max_iters, tol: args.em_tol, ..EmConfig::default() };
                    let ds = baselines::dawid_skene_em(&dataset.labels, em)?;
                    eprintln!("EM iterations: {} (converged: {})", ds.iterations, ds.converged);
                    ds.predictions
                }
            };
            emit(args.out.as_deref(), &io::format_predictions(&dataset, &predictions), stdout)?;
            if let Some(p) = &args.posterior {
                io::write(p, &io::format_posteriors(&dataset, &predictions))?;
            }
            if let Some(g) = &gold {
                eprintln!("error rate: {:.4}", eval::prediction_error_rate(&predictions, g)?);
            }
            Ok(())
        }
        Command::Evaluate(args) => {
            let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
            let predicted = io::parse_item_labels(&read(&args.pred)?, args.classes)?;
            let gold = io::parse_item_labels(&read(&args.gold)?, args.classes)?;
            let index: std::collections::HashMap<&str, usize> =
                predicted.iter().enumerate().map(|(i, (id, _))| (id.as_str(), i)).collect();
            let labels: Vec<usize> = predicted.iter().map(|(_, l)| *l).collect();
            let gold = GoldLabels::new(
                labels.len(),
                args.classes,
                gold.iter().filter_map(|(id, c)| index.get(id.as_str()).map(|&i| (i, *c))),
            )?;
            let rate = eval::error_rate(&labels, &gold)?;
            writeln!(stdout, "items\t{}\nerror_rate\t{rate:?}", gold.len()).map_err(|e| Error::io("<stdout>", e))
        }
        Command::ReportWorkers(mut args) => {
            load_with_config(config, &mut args.data, &mut TrainArgs::default())?;
            let (dataset, gold) = args.data.load()?;
            let model = checkpoint::load(&args.checkpoint)?;
            model.guiding.check_compatible(&dataset.labels)?;
            let rep = eval::report_workers(&model, &dataset.labels, gold.as_ref());
            emit(args.out.as_deref(), &report::format_worker_report(&rep, &dataset), stdout)?;
            if let (Some(p), Some(text)) = (&args.psi_out, report::format_psi(&rep, &dataset)) {
                io::write(p, &text)?;
            }
            Ok(())
        }
        Command::Synth(args) => run_synth(&args),
    }
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    let workers = match args.kind {
        SynthKind::Ability => {
            WorkerModel::Ability(synth::planted_accuracies(args.workers, args.acc_min, args.acc_max, args.seed))
        }
        SynthKind::Confusion => WorkerModel::Confusion(synth::planted_confusions(
            args.workers,
            args.classes,
            args.acc_min,
            args.acc_max,
            args.seed,
        )),
    };
    let cfg = SynthConfig {
        num_items: args.items,
        num_workers: args.workers,
        num_classes: args.classes,
        class_prior: None,
        workers: workers.clone(),
        labels_per_item: LabelsPerItem::Fixed(args.labels_per_item),
        seed: args.seed,
    };
    let (labels, gold) = synth::generate_synthetic(&cfg)?;
    let mut text = String::new();
    for (i, k, l) in labels.iter() {
        text.push_str(&format!("{i}\t{k}\t{}\n", l + 1));
    }
    io::write(&args.out, &text)?;
    let gold_text: String = gold.iter().map(|(i, c)| format!("{i}\t{}\n", c + 1)).collect();
    io::write(&args.gold_out, &gold_text)?;
    if let Some(p) = &args.planted_out {
        let c = args.classes;
        let mut out = String::from("# worker\tclass\treport probabilities\n");
        for k in 0..args.workers {
            for t in 0..c {
                let row: Vec<f64> = match &workers {
                    WorkerModel::Ability(acc) => {
                        (0..c).map(|j| if j == t { acc[k] } else { (1.0 - acc[k]) / (c - 1) as f64 }).collect()
                    }
                    WorkerModel::Confusion(m) => m[k][t * c..(t + 1) * c].to_vec(),
                };
                let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                out.push_str(&format!("{k}\t{}\t{}\n", t + 1, cells.join("\t")));
            }
        }
        io::write(p, &out)?;
    }
    Ok(())
}
