use cpf_core::data::{Dataset, DiscretizerSpec, InteractionRecord, StudentSequence};
use cpf_core::graph::PMatrix;
use cpf_core::model::{Model, ModelConfig};
use cpf_core::train::{
    cross_validate, evaluate, mean_bce, metrics, train, FoldData, TrainConfig,
};
use cpf_core::CoreError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec() -> DiscretizerSpec {
    DiscretizerSpec {
        answer_time_cap: 60,
        interval_time_cap: 100,
        difficulty_buckets: 10,
        accuracy_buckets: 10,
    }
}

fn random_records(students: usize, steps: usize, seed: u64) -> Vec<InteractionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for s in 0..students {
        let mut ts = 1_000.0;
        for _ in 0..steps {
            let ex = rng.random_range(0..8);
            ts += rng.random_range(10.0..5_000.0);
            out.push(InteractionRecord {
                student_id: format!("s{s:03}"),
                exercise_id: format!("e{ex}"),
                concept_id: format!("c{}", ex % 4),
                correct: rng.random_bool(if ex < 4 { 0.8 } else { 0.35 }),
                answer_time: rng.random_range(1.0..90.0),
                timestamp: ts,
            });
        }
    }
    out
}

fn dataset(students: usize, steps: usize, window: usize, seed: u64) -> Dataset {
    Dataset::from_records(&random_records(students, steps, seed), &spec(), window).unwrap()
}

fn small_model_config() -> ModelConfig {
    ModelConfig {
        d: 8,
        d_a: 4,
        review_window: 5,
        dropout: 0.0,
        ..ModelConfig::default()
    }
}

fn model_for(ds: &Dataset, cfg: ModelConfig, seed: u64) -> Model {
    let cfg = cfg.with_vocab(&ds.meta);
    let q = ds.meta.vocab.q_matrix(cfg.gamma).unwrap();
    let k = cfg.n_concepts;
    Model::new(cfg, q, PMatrix::empty(k), seed).unwrap()
}

fn all(ds: &Dataset) -> Vec<&StudentSequence> {
    ds.sequences.iter().collect()
}

#[test]
fn overfits_four_tiny_sequences() {
    let ds = dataset(4, 6, 6, 1);
    let model = model_for(&ds, small_model_config(), 2);
    let cfg = TrainConfig {
        epochs: 500,
        patience: 0,
        batch_size: 4,
        l2_lambda: 0.0,
        ..TrainConfig::default()
    };
    let seqs = all(&ds);
    let out = train(model, &seqs, &[], &cfg, 3).unwrap();
    let loss = mean_bce(&out.model, &seqs).unwrap();
    assert!(loss < 0.1, "training bce {loss}");
}

#[test]
fn same_seed_gives_identical_logs_and_parameters() {
    let ds = dataset(12, 15, 8, 4);
    let seqs = all(&ds);
    let (tr, va) = seqs.split_at(10);
    let cfg = TrainConfig { epochs: 3, batch_size: 5, ..TrainConfig::default() };
    let mc = ModelConfig { dropout: 0.2, ..small_model_config() };
    let a = train(model_for(&ds, mc.clone(), 5), tr, va, &cfg, 6).unwrap();
    let b = train(model_for(&ds, mc, 5), tr, va, &cfg, 6).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.model.params, b.model.params);
    assert_eq!(a.best_epoch, b.best_epoch);
}

#[test]
fn parallel_workers_are_deterministic_and_close_to_serial() {
    let ds = dataset(12, 15, 8, 7);
    let seqs = all(&ds);
    let serial = TrainConfig { epochs: 2, batch_size: 8, ..TrainConfig::default() };
    let par = TrainConfig { workers: 3, ..serial.clone() };
    let a = train(model_for(&ds, small_model_config(), 1), &seqs, &[], &par, 2).unwrap();
    let b = train(model_for(&ds, small_model_config(), 1), &seqs, &[], &par, 2).unwrap();
    assert_eq!(a.model.params, b.model.params);
    let c = train(model_for(&ds, small_model_config(), 1), &seqs, &[], &serial, 2).unwrap();
    for ((_, x), (_, y)) in a.model.params.iter().zip(c.model.params.iter()) {
        for (u, v) in x.tensor.data().iter().zip(y.tensor.data()) {
            assert!((u - v).abs() < 1e-9);
        }
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_and_loss_unchanged() {
    let ds = dataset(6, 10, 10, 8);
    let seqs = all(&ds);
    let model = model_for(&ds, small_model_config(), 9);
    let before = model.params.clone();
    let cfg = TrainConfig { lr: 0.0, epochs: 3, patience: 0, ..TrainConfig::default() };
    let out = train(model, &seqs, &[], &cfg, 1).unwrap();
    assert_eq!(out.model.params, before);
    assert!(out.log.windows(2).all(|w| w[0].train_bce == w[1].train_bce));
}

#[test]
fn loss_terms_count_valid_steps_minus_windows() {
    let ds = dataset(5, 13, 6, 10);
    let seqs = all(&ds);
    let want: usize = seqs.iter().map(|s| s.mask.iter().filter(|&&m| m).count() - 1).sum();
    let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
    let out = train(model_for(&ds, small_model_config(), 1), &seqs, &[], &cfg, 1).unwrap();
    assert_eq!(out.log[0].train_predictions, want);
    let m = evaluate(&out.model, &seqs).unwrap();
    assert_eq!(m.n_predictions, want);
}

#[test]
fn non_finite_output_aborts_with_batch_index() {
    let ds = dataset(4, 8, 8, 11);
    let seqs = all(&ds);
    let mut model = model_for(&ds, small_model_config(), 1);
    let id = model.params.id("b5").unwrap();
    model.params.get_mut(id).tensor.data_mut()[0] = f64::NAN;
    let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
    let err = train(model, &seqs, &[], &cfg, 1).err().unwrap();
    assert!(matches!(err, CoreError::NonFiniteLoss { epoch: 1, batch: 0 }), "{err}");
}

#[test]
fn early_stopping_keeps_best_validation_epoch() {
    let ds = dataset(16, 20, 10, 12);
    let seqs = all(&ds);
    let (tr, va) = seqs.split_at(20);
    let cfg = TrainConfig { epochs: 30, patience: 2, lr: 0.05, batch_size: 4, ..TrainConfig::default() };
    let out = train(model_for(&ds, small_model_config(), 2), tr, va, &cfg, 3).unwrap();
    let best_auc = out.log.iter().filter_map(|l| l.val_auc).fold(f64::MIN, f64::max);
    assert_eq!(out.log[out.best_epoch - 1].val_auc, Some(best_auc));
    assert_eq!(evaluate(&out.model, va).unwrap().auc, Some(best_auc));
    if out.log.len() < 30 {
        assert_eq!(out.log.len(), out.best_epoch + 2);
    }
}

#[test]
fn cross_validation_uses_disjoint_test_folds_and_is_reproducible() {
    let ds = dataset(15, 12, 6, 13);
    let cfg = TrainConfig { epochs: 2, patience: 0, ..TrainConfig::default() };
    let a = cross_validate(&ds, &small_model_config(), &cfg, 5, 4).unwrap();
    let b = cross_validate(&ds, &small_model_config(), &cfg, 5, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.folds.len(), 5);
    let total: usize = a.folds.iter().map(|f| f.test.n_predictions).sum();
    assert_eq!(total, evaluate_count(&ds));
    let mean_acc = a.folds.iter().map(|f| f.test.acc).sum::<f64>() / 5.0;
    assert!((a.mean.acc - mean_acc).abs() < 1e-15);
}

fn evaluate_count(ds: &Dataset) -> usize {
    ds.sequences.iter().map(|s| s.num_predictions()).sum()
}

#[test]
fn fold_difficulty_ignores_test_labels() {
    let ds = dataset(15, 12, 6, 14);
    let split = cpf_core::data::kfold(&ds.students(), 5, 1).unwrap().remove(0);
    let base = FoldData::prepare(&ds, split.clone());
    let mut flipped = ds.clone();
    for seq in &mut flipped.sequences {
        if split.test.contains(&seq.student_id) {
            for st in &mut seq.steps {
                st.correct = !st.correct;
            }
        }
    }
    let other = FoldData::prepare(&flipped, split);
    let buckets = |f: &FoldData| -> Vec<usize> {
        f.train().iter().flat_map(|s| s.steps.iter().map(|st| st.difficulty_bucket)).collect()
    };
    assert_eq!(buckets(&base), buckets(&other));
    assert_eq!(base.graph.prerequisites, other.graph.prerequisites);
}

#[test]
fn random_predictor_auc_is_near_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let pairs: Vec<(f64, bool)> = (0..10_000).map(|i| (rng.random::<f64>(), i % 2 == 0)).collect();
    let auc = metrics(&pairs).auc.unwrap();
    assert!((0.45..=0.55).contains(&auc), "{auc}");
}
