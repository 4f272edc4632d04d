use tlmarket::reputation::Outcome;
use tlmarket::tltask::*;

const SEEDS: u64 = 20;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Clean-source accuracy of a model pretrained at strength `a`, per seed.
fn source_accuracies(a: f64, seeds: u64) -> Vec<f64> {
    let spec = TaskSpec::default();
    let cfg = ClassifierConfig::default();
    (0..seeds)
        .map(|s| {
            let data = gen_task(&spec, s).unwrap();
            let model = pretrain(&data.source, a, &cfg, 1000 + s).unwrap();
            evaluate(&model, &spec.source_holdout(2000, 5000 + s)).unwrap().accuracy
        })
        .collect()
}

/// Target accuracy after fine-tuning a source pretrained at strength `a`.
fn transfer_accuracies(a: f64) -> Vec<f64> {
    let spec = TaskSpec::default();
    let cfg = ClassifierConfig::default();
    (0..SEEDS)
        .map(|s| {
            let data = gen_task(&spec, s).unwrap();
            let model = pretrain(&data.source, a, &cfg, 1000 + s).unwrap();
            let tuned = fine_tune(&model, &data.target_train, cfg.fine_tune_epochs, &cfg, 2000 + s).unwrap();
            evaluate(&tuned, &data.target_test).unwrap().accuracy
        })
        .collect()
}

#[test]
fn same_seed_same_task() {
    let spec = TaskSpec::default();
    assert_eq!(gen_task(&spec, 9).unwrap(), gen_task(&spec, 9).unwrap());
    assert_ne!(gen_task(&spec, 9).unwrap(), gen_task(&spec, 10).unwrap());
}

#[test]
fn zero_shift_keeps_domains_identical_in_mean() {
    let spec = TaskSpec {
        domain_shift: 0.0,
        source_samples: 4000,
        target_train_samples: 4000,
        ..TaskSpec::default()
    };
    let data = gen_task(&spec, 1).unwrap();
    // Per-class feature means agree within 3 standard errors.
    for class in 0..2 {
        for k in 0..spec.feature_dim {
            let col = |d: &Dataset| -> (f64, f64) {
                let xs: Vec<f64> = (0..d.len()).filter(|&i| d.labels[i] == class).map(|i| d.row(i)[k]).collect();
                (mean(&xs), xs.len() as f64)
            };
            let (ms, ns) = col(&data.source);
            let (mt, nt) = col(&data.target_train);
            let se = spec.noise * (1.0 / ns + 1.0 / nt).sqrt();
            assert!((ms - mt).abs() < 3.0 * se, "class {class} dim {k}: {ms} vs {mt}");
        }
    }
}

#[test]
fn classes_are_balanced() {
    let spec = TaskSpec {
        source_samples: 10_000,
        ..TaskSpec::default()
    };
    let data = gen_task(&spec, 2).unwrap();
    let ones = data.source.labels.iter().filter(|&&l| l == 1).count() as f64;
    // 99.9% two-sided binomial interval around 5000.
    assert!((ones - 5000.0).abs() < 3.29 * 50.0, "{ones}");
}

#[test]
fn clean_pretraining_is_accurate() {
    let acc = source_accuracies(0.0, 10);
    assert!(acc.iter().all(|&a| a >= 0.9), "{acc:?}");
}

#[test]
fn half_flipped_labels_carry_no_signal() {
    let acc = mean(&source_accuracies(0.5, 10));
    assert!((acc - 0.5).abs() <= 0.1, "{acc}");
}

#[test]
fn fully_flipped_labels_invert_the_model() {
    let acc = mean(&source_accuracies(1.0, 10));
    assert!(acc <= 0.1, "{acc}");
}

#[test]
fn zero_epoch_fine_tune_is_identity() {
    let spec = TaskSpec::default();
    let cfg = ClassifierConfig::default();
    let data = gen_task(&spec, 0).unwrap();
    let model = pretrain(&data.source, 0.0, &cfg, 0).unwrap();
    assert_eq!(fine_tune(&model, &data.target_train, 0, &cfg, 1).unwrap(), model);
}

#[test]
fn transfer_beats_training_from_scratch() {
    let spec = TaskSpec::default();
    let cfg = ClassifierConfig::default();
    let scratch: Vec<f64> = (0..SEEDS)
        .map(|s| {
            let data = gen_task(&spec, s).unwrap();
            let model = train_from_scratch(&data.target_train, cfg.fine_tune_epochs, &cfg, 2000 + s).unwrap();
            evaluate(&model, &data.target_test).unwrap().accuracy
        })
        .collect();
    let transfer = transfer_accuracies(0.0);
    assert!(mean(&transfer) >= mean(&scratch), "{} vs {}", mean(&transfer), mean(&scratch));
}

#[test]
fn poisoned_source_hurts_transfer_monotonically() {
    let by_strength: Vec<f64> = [0.0, 0.25, 0.5, 0.8].iter().map(|&a| mean(&transfer_accuracies(a))).collect();
    for w in by_strength.windows(2) {
        assert!(w[1] <= w[0], "{by_strength:?}");
    }
}

#[test]
fn evaluation_is_exact_and_repeatable() {
    let spec = TaskSpec {
        noise: 1e-9,
        domain_shift: 0.0,
        ..TaskSpec::default()
    };
    let cfg = ClassifierConfig::default();
    let data = gen_task(&spec, 4).unwrap();
    let model = pretrain(&data.source, 0.0, &cfg, 4).unwrap();
    let a = evaluate(&model, &data.target_test).unwrap();
    assert_eq!(a, evaluate(&model, &data.target_test).unwrap());
    assert_eq!(a.accuracy, a.correct as f64 / a.sample_count as f64);
    assert_eq!(a.accuracy, 1.0);
    let empty = Dataset {
        dim: 4,
        features: vec![],
        labels: vec![],
    };
    assert!(matches!(evaluate(&model, &empty), Err(TaskError::EmptySet)));
}

#[test]
fn constant_classifier_scores_half_on_balanced_data() {
    let spec = TaskSpec {
        target_test_samples: 10_000,
        ..TaskSpec::default()
    };
    let cfg = ClassifierConfig::default();
    let data = gen_task(&spec, 6).unwrap();
    let mut model = pretrain(&data.source, 0.0, &cfg, 6).unwrap();
    // Zero weights and a bias favouring class 1 predict 1 everywhere.
    let params = model.net.params_mut();
    params.iter_mut().for_each(|p| *p = 0.0);
    let n = params.len();
    params[n - 1] = 1.0;
    let acc = evaluate(&model, &data.target_test).unwrap().accuracy;
    assert!((acc - 0.5).abs() < 3.29 * 0.005, "{acc}");
    let report = evaluate(&model, &data.target_test).unwrap();
    assert_eq!(rate_outcome(&report, 0.75), Outcome::Negative);
}
