use labelagg_core::synth::{self, LabelsPerItem, SynthConfig, WorkerModel};
use labelagg_core::trainer::{self, ModelKind, TrainConfig, Warning};

fn variance(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}

#[test]
fn loss_settles_on_synthetic_data() {
    for seed in 0..3 {
        for (kind, c, workers) in [
            (ModelKind::NnWa, 2, WorkerModel::Ability(synth::planted_accuracies(20, 0.55, 0.9, seed))),
            (ModelKind::NnMc, 3, WorkerModel::Confusion(synth::planted_confusions(20, 3, 0.5, 0.95, seed))),
        ] {
            let data = SynthConfig {
                num_items: 1000,
                num_workers: 20,
                num_classes: c,
                class_prior: None,
                workers,
                labels_per_item: LabelsPerItem::Fixed(5),
                seed,
            };
            let (labels, _) = synth::generate_synthetic(&data).unwrap();
            let mut cfg = TrainConfig::new(kind);
            cfg.seed = seed;
            let model = trainer::train(&labels, &cfg).unwrap();
            let h = &model.loss_history;
            assert!(h.len() >= 10, "{kind:?} seed {seed}: {} epochs", h.len());
            assert!(h.iter().all(|v| v.is_finite()));
            assert!(variance(&h[h.len() - 5..]) < variance(&h[..5]), "{kind:?} seed {seed}");
            let tail = h[h.len() - 5..].iter().sum::<f64>() / 5.0;
            assert!(tail <= h[0]);
            assert!(!model.warnings.iter().any(|w| matches!(w, Warning::NoProgress { .. })));
        }
    }
}
